#include "unitok/autoencoder.hpp"

#include <algorithm>

namespace unitok {

Autoencoder Autoencoder::make(int d_in, const std::vector<int>& hidden, int d_latent, Rng& rng) {
    std::vector<int> enc_dims;
    enc_dims.push_back(d_in);
    enc_dims.insert(enc_dims.end(), hidden.begin(), hidden.end());
    enc_dims.push_back(d_latent);
    std::vector<int> dec_dims(enc_dims.rbegin(), enc_dims.rend());
    Autoencoder ae;
    ae.encoder = Mlp::make(enc_dims, rng);
    ae.decoder = Mlp::make(dec_dims, rng);
    return ae;
}

double recon_loss(const std::vector<Vec>& x, const std::vector<Vec>& x_hat) {
    if (x.size() != x_hat.size()) throw ShapeError("recon_loss: batch size mismatch");
    double s = 0.0;
    for (size_t i = 0; i < x.size(); ++i) s += squared_distance(x[i], x_hat[i]);
    return s;
}

Vec recon_loss_grad(const Vec& x, const Vec& x_hat) {
    if (x.size() != x_hat.size()) throw ShapeError("recon_loss_grad: length mismatch");
    Vec g(x.size());
    for (size_t i = 0; i < x.size(); ++i) g[i] = 2.0 * (x_hat[i] - x[i]);
    return g;
}

}  // namespace unitok
