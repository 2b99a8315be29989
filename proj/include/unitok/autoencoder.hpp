#pragma once

// Shared encoder/decoder pair. The encoder projects items from every domain
// into one latent space; the decoder reconstructs from the quantized latent.

#include "unitok/numeric.hpp"

namespace unitok {

struct Autoencoder {
    Mlp encoder;  // d_in -> hidden... -> d_latent
    Mlp decoder;  // d_latent -> reversed hidden... -> d_in

    static Autoencoder make(int d_in, const std::vector<int>& hidden, int d_latent, Rng& rng);

    int d_in() const { return encoder.in_dim(); }
    int d_latent() const { return encoder.out_dim(); }

    Vec encode(const Vec& x) const { return encoder.forward(x); }
    Vec encode(const Vec& x, Mlp::Trace& tr) const { return encoder.forward(x, tr); }
    Vec decode(const Vec& z_hat) const { return decoder.forward(z_hat); }
    Vec decode(const Vec& z_hat, Mlp::Trace& tr) const { return decoder.forward(z_hat, tr); }
};

// Sum over items of the squared L2 reconstruction distance.
double recon_loss(const std::vector<Vec>& x, const std::vector<Vec>& x_hat);
// d/dx_hat of one item's term: 2 (x_hat - x).
Vec recon_loss_grad(const Vec& x, const Vec& x_hat);

}  // namespace unitok
