#include "unitok/numeric.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <thread>

namespace unitok {

bool all_finite(const Vec& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

bool all_finite(const Matrix& m) {
    return all_finite(m.data);
}

double dot(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double squared_distance(const Vec& a, const Vec& b) {
    if (a.size() != b.size()) throw ShapeError("squared_distance: length mismatch");
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double norm(const Vec& a) {
    double s = 0.0;
    for (double x : a) s += x * x;
    return std::sqrt(s);
}

void axpy(double alpha, const Vec& x, Vec& y) {
    if (x.size() != y.size()) throw ShapeError("axpy: length mismatch");
    for (size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

Vec softmax(const Vec& logits) {
    if (logits.empty()) throw ShapeError("softmax: empty input");
    double mx = logits[0];
    for (double v : logits) mx = std::max(mx, v);
    Vec p(logits.size());
    double z = 0.0;
    for (size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - mx);
        z += p[i];
    }
    for (double& v : p) v /= z;
    return p;
}

// --- Rng ------------------------------------------------------------------

namespace {

uint64_t splitmix64(uint64_t& x) {
    x += 0x9E3779B97F4A7C15ULL;
    uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}

}  // namespace

Rng::Rng(uint64_t seed) : seed_(seed) {
    uint64_t s = seed;
    for (auto& w : state_) w = splitmix64(s);
}

uint64_t Rng::next() {
    uint64_t* s = state_;
    uint64_t result = rotl(s[0] + s[3], 23) + s[0];
    uint64_t t = s[1] << 17;
    s[2] ^= s[0];
    s[3] ^= s[1];
    s[1] ^= s[2];
    s[0] ^= s[3];
    s[2] ^= t;
    s[3] = rotl(s[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next() >> 11) * 0x1.0p-53;
}

double Rng::normal() {
    if (have_spare_) {
        have_spare_ = false;
        return spare_;
    }
    double u1 = 1.0 - uniform();  // (0, 1]
    double u2 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double theta = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(theta);
    have_spare_ = true;
    return r * std::cos(theta);
}

int Rng::uniform_int(int n) {
    if (n <= 0) throw NumericError("uniform_int: n must be positive");
    uint64_t un = static_cast<uint64_t>(n);
    uint64_t limit = UINT64_MAX - UINT64_MAX % un;
    uint64_t x;
    do {
        x = next();
    } while (x >= limit);
    return static_cast<int>(x % un);
}

Vec Rng::gaussian_vec(int n) {
    Vec v(n);
    for (double& x : v) x = normal();
    return v;
}

Vec Rng::unit_sphere(int n) {
    while (true) {
        Vec v = gaussian_vec(n);
        double nrm = norm(v);
        if (nrm > 1e-12) {
            for (double& x : v) x /= nrm;
            return v;
        }
    }
}

Rng Rng::fork(uint64_t salt) const {
    uint64_t s = seed_ ^ (salt * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL);
    return Rng(splitmix64(s));
}

// --- activations ------------------------------------------------------------

Vec relu(const Vec& x) {
    Vec y(x.size());
    for (size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
    return y;
}

Vec relu_backward(const Vec& x, const Vec& grad_out) {
    if (x.size() != grad_out.size()) throw ShapeError("relu_backward: length mismatch");
    Vec g(x.size());
    for (size_t i = 0; i < x.size(); ++i) g[i] = x[i] > 0.0 ? grad_out[i] : 0.0;
    return g;
}

// --- LinearLayer ------------------------------------------------------------

LinearLayer LinearLayer::he_uniform(int out_dim, int in_dim, Rng& rng) {
    LinearLayer l;
    l.W = Matrix(out_dim, in_dim);
    l.b.assign(out_dim, 0.0);
    l.gW = Matrix(out_dim, in_dim);
    l.gb.assign(out_dim, 0.0);
    double limit = std::sqrt(6.0 / in_dim);
    for (double& w : l.W.data) w = (2.0 * rng.uniform() - 1.0) * limit;
    return l;
}

LinearLayer LinearLayer::zeros(int out_dim, int in_dim) {
    LinearLayer l;
    l.W = Matrix(out_dim, in_dim);
    l.b.assign(out_dim, 0.0);
    l.gW = Matrix(out_dim, in_dim);
    l.gb.assign(out_dim, 0.0);
    return l;
}

Vec LinearLayer::forward(const Vec& x) const {
    if (static_cast<int>(x.size()) != W.cols) {
        throw ShapeError("linear forward: input length " + std::to_string(x.size()) +
                         ", expected " + std::to_string(W.cols));
    }
    Vec y(W.rows);
    for (int r = 0; r < W.rows; ++r) {
        const double* w = W.row(r);
        double s = b[r];
        for (int c = 0; c < W.cols; ++c) s += w[c] * x[c];
        y[r] = s;
    }
    return y;
}

Vec LinearLayer::backward(const Vec& x, const Vec& grad_out) {
    if (static_cast<int>(x.size()) != W.cols || static_cast<int>(grad_out.size()) != W.rows) {
        throw ShapeError("linear backward: shape mismatch");
    }
    Vec gx(W.cols, 0.0);
    for (int r = 0; r < W.rows; ++r) {
        double go = grad_out[r];
        gb[r] += go;
        double* gw = gW.row(r);
        const double* w = W.row(r);
        for (int c = 0; c < W.cols; ++c) {
            gw[c] += go * x[c];
            gx[c] += w[c] * go;
        }
    }
    return gx;
}

void LinearLayer::zero_grads() {
    gW.fill(0.0);
    std::fill(gb.begin(), gb.end(), 0.0);
}

// --- Mlp --------------------------------------------------------------------

Mlp Mlp::make(const std::vector<int>& dims, Rng& rng) {
    if (dims.size() < 2) throw ShapeError("Mlp::make: need at least in/out dims");
    Mlp m;
    for (size_t i = 0; i + 1 < dims.size(); ++i) {
        m.layers.push_back(LinearLayer::he_uniform(dims[i + 1], dims[i], rng));
    }
    return m;
}

Vec Mlp::forward(const Vec& x) const {
    Vec a = x;
    for (size_t i = 0; i < layers.size(); ++i) {
        Vec u = layers[i].forward(a);
        a = (i + 1 < layers.size()) ? relu(u) : std::move(u);
    }
    return a;
}

Vec Mlp::forward(const Vec& x, Trace& tr) const {
    tr.inputs.clear();
    tr.pre.clear();
    Vec a = x;
    for (size_t i = 0; i < layers.size(); ++i) {
        tr.inputs.push_back(a);
        Vec u = layers[i].forward(a);
        tr.pre.push_back(u);
        a = (i + 1 < layers.size()) ? relu(u) : std::move(u);
    }
    return a;
}

Vec Mlp::backward(const Trace& tr, const Vec& grad_out) {
    Vec g = grad_out;
    for (size_t i = layers.size(); i-- > 0;) {
        if (i + 1 < layers.size()) g = relu_backward(tr.pre[i], g);
        g = layers[i].backward(tr.inputs[i], g);
    }
    return g;
}

void Mlp::zero_grads() {
    for (auto& l : layers) l.zero_grads();
}

size_t Mlp::param_count() const {
    size_t n = 0;
    for (const auto& l : layers) n += l.param_count();
    return n;
}

// --- Adam -------------------------------------------------------------------

void Adam::init(const std::vector<TensorRef>& tensors) {
    t = 0;
    m_.clear();
    v_.clear();
    for (const auto& ts : tensors) {
        m_.emplace_back(ts.n, 0.0);
        v_.emplace_back(ts.n, 0.0);
    }
}

void Adam::step(const std::vector<TensorRef>& tensors) {
    if (m_.size() != tensors.size()) throw NumericError("Adam::step before init");
    ++t;
    double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (size_t k = 0; k < tensors.size(); ++k) {
        const TensorRef& ts = tensors[k];
        if (m_[k].size() != ts.n) throw ShapeError("Adam::step: tensor size changed: " + ts.name);
        for (size_t i = 0; i < ts.n; ++i) {
            double g = ts.g[i];
            if (!std::isfinite(g)) {
                throw NumericError("non-finite gradient in tensor '" + ts.name +
                                   "' at step " + std::to_string(t));
            }
            m_[k][i] = beta1 * m_[k][i] + (1.0 - beta1) * g;
            v_[k][i] = beta2 * v_[k][i] + (1.0 - beta2) * g * g;
            double mhat = m_[k][i] / c1;
            double vhat = v_[k][i] / c2;
            ts.p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
            ts.g[i] = 0.0;
        }
    }
}

// --- parallel helpers --------------------------------------------------------

int worker_count() {
    int hw = static_cast<int>(std::thread::hardware_concurrency());
    if (hw < 1) hw = 1;
    if (const char* env = std::getenv("UNITOK_THREADS")) {
        int cap = std::atoi(env);
        if (cap >= 1 && cap < hw) hw = cap;
    }
    return hw;
}

void parallel_for(size_t n, const std::function<void(size_t)>& fn) {
    int workers = worker_count();
    if (workers <= 1 || n < 2) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    size_t nthreads = std::min<size_t>(workers, n);
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (size_t w = 0; w < nthreads; ++w) {
        pool.emplace_back([&, w]() {
            for (size_t i = w; i < n; i += nthreads) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace unitok
