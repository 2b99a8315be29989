#pragma once

// Dense double-precision linear algebra, feed-forward layers with explicit
// backward passes, Adam, and a seeded counter-free RNG. Everything above this
// file is built from these pieces; there is no autodiff graph.

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace unitok {

using Vec = std::vector<double>;

struct ShapeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Row-major dense matrix.
struct Matrix {
    int rows = 0;
    int cols = 0;
    Vec data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    double& at(int r, int c) { return data[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * cols + c]; }
    double* row(int r) { return data.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return data.data() + static_cast<size_t>(r) * cols; }
    void fill(double v) { std::fill(data.begin(), data.end(), v); }
};

bool all_finite(const Vec& v);
bool all_finite(const Matrix& m);

double dot(const Vec& a, const Vec& b);
double squared_distance(const Vec& a, const Vec& b);
double norm(const Vec& a);
void axpy(double alpha, const Vec& x, Vec& y);  // y += alpha * x

// Numerically stable softmax (max subtraction).
Vec softmax(const Vec& logits);

// xoshiro256++ seeded through splitmix64. The integer stream is
// platform-independent; identical seeds give identical sequences.
struct Rng {
    explicit Rng(uint64_t seed);

    uint64_t next();
    double uniform();              // [0, 1)
    double normal();               // standard normal, Box-Muller
    int uniform_int(int n);        // unbiased draw from [0, n)
    Vec gaussian_vec(int n);
    Vec unit_sphere(int n);
    Rng fork(uint64_t salt) const; // independent child stream

    uint64_t seed_value() const { return seed_; }

  private:
    uint64_t seed_ = 0;
    uint64_t state_[4] = {0, 0, 0, 0};
    bool have_spare_ = false;
    double spare_ = 0.0;
};

Vec relu(const Vec& x);
// Masks grad_out where x <= 0 (subgradient 0 at the kink).
Vec relu_backward(const Vec& x, const Vec& grad_out);

struct LinearLayer {
    Matrix W;   // out x in
    Vec b;      // out
    Matrix gW;  // gradient accumulators, zeroed by the optimizer step
    Vec gb;

    static LinearLayer he_uniform(int out_dim, int in_dim, Rng& rng);
    static LinearLayer zeros(int out_dim, int in_dim);

    int in_dim() const { return W.cols; }
    int out_dim() const { return W.rows; }

    Vec forward(const Vec& x) const;
    // Accumulates gW += grad_out (x) x, gb += grad_out; returns W^T grad_out.
    Vec backward(const Vec& x, const Vec& grad_out);
    void zero_grads();
    size_t param_count() const { return W.data.size() + b.size(); }
};

// Plain dense stack: linear layers with ReLU between them, none after the last.
struct Mlp {
    std::vector<LinearLayer> layers;

    // dims = {in, hidden..., out}
    static Mlp make(const std::vector<int>& dims, Rng& rng);

    struct Trace {
        std::vector<Vec> inputs;  // input to each layer (inputs[0] = x)
        std::vector<Vec> pre;     // pre-activation output of each layer
    };

    Vec forward(const Vec& x) const;
    Vec forward(const Vec& x, Trace& tr) const;
    // Accumulates layer grads; returns gradient w.r.t. the input.
    Vec backward(const Trace& tr, const Vec& grad_out);

    int in_dim() const { return layers.front().in_dim(); }
    int out_dim() const { return layers.back().out_dim(); }
    void zero_grads();
    size_t param_count() const;
};

// Named view of a parameter tensor and its gradient buffer.
struct TensorRef {
    std::string name;
    double* p = nullptr;
    double* g = nullptr;
    size_t n = 0;
};

struct Adam {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long t = 0;

    void init(const std::vector<TensorRef>& tensors);
    // Standard bias-corrected update. Throws NumericError on a non-finite
    // gradient, naming the tensor and step. Gradients are zeroed afterwards.
    void step(const std::vector<TensorRef>& tensors);

  private:
    std::vector<Vec> m_;
    std::vector<Vec> v_;
};

// Worker cap for read-only parallel loops; honors UNITOK_THREADS.
int worker_count();
// Runs fn(i) for i in [0, n). Results must be written by index, which keeps
// the output independent of the worker count.
void parallel_for(size_t n, const std::function<void(size_t)>& fn);

}  // namespace unitok
