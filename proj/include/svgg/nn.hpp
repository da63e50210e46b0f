#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "svgg/rng.hpp"
#include "svgg/vec.hpp"

namespace svgg::nn {

enum class Activation { Identity, Relu, Gelu, Tanh, Sigmoid };

const char* activation_name(Activation a);
Activation activation_from_name(const std::string& name);

double activate(Activation a, double x);
double activate_derivative(Activation a, double x); // derivative at pre-activation x

// Fixed-topology dense network. Parameters live in one flat buffer
// ([W0 row-major | b0 | W1 | b1 | ...]) so optimizer state and snapshots
// are plain arrays.
struct Mlp {
    std::vector<int> dims;
    Activation hidden_act = Activation::Gelu;
    Activation output_act = Activation::Identity;
    Vec params;
    std::vector<size_t> layer_offset; // offset of W for each layer

    static Mlp make(std::vector<int> dims, Activation hidden, Activation output);

    int layer_count() const { return static_cast<int>(dims.size()) - 1; }
    int input_dim() const { return dims.front(); }
    int output_dim() const { return dims.back(); }
    size_t param_count() const { return params.size(); }

    std::span<double> weight(int layer);
    std::span<const double> weight(int layer) const;
    std::span<double> bias(int layer);
    std::span<const double> bias(int layer) const;
};

// uniform in [-1/sqrt(fan_in), +1/sqrt(fan_in)], biases zero
void init_uniform_fanin(Mlp& net, Rng& rng);

struct ForwardCache {
    std::vector<Vec> pre;       // pre-activations per layer
    std::vector<Vec> act;       // act[0] = input, act[l+1] = activation(pre[l])
    std::vector<Vec> gelu_tanh; // tanh(u) per GELU layer, reused by backward
};

Vec mlp_forward(const Mlp& net, std::span<const double> input);
const Vec& mlp_forward_cached(const Mlp& net, std::span<const double> input, ForwardCache& cache);

struct MlpGrads {
    Vec params;
    Vec input;

    void resize_for(const Mlp& net);
    void zero();
    void add_scaled(const MlpGrads& other, double scale);
};

// Gradients of <upstream, output> w.r.t. every parameter and the input.
// With on_preactivation = true, upstream is taken against the final layer's
// pre-activation instead (used for logit-space losses).
void mlp_backward(const Mlp& net, const ForwardCache& cache, std::span<const double> upstream,
                  MlpGrads& out, bool accumulate = false, bool on_preactivation = false);
MlpGrads mlp_backward(const Mlp& net, std::span<const double> input, std::span<const double> upstream);

// input gradient only; skips the parameter-gradient writes
void mlp_backward_input(const Mlp& net, const ForwardCache& cache, std::span<const double> upstream,
                        Vec& input_grad, bool on_preactivation = false);

struct AdamState {
    Vec m;
    Vec v;
    int64_t step = 0;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;

    static AdamState make(size_t n, double lr);
};

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state);

// Batch gradient accumulation: per-sample backward passes may run in
// parallel; partials are reduced serially in sample order so the result
// does not depend on the thread count. `upstream_fn(i, output, upstream)`
// fills the upstream gradient for sample i from its forward output.
// Returns the sum of per-sample gradients (caller scales).
template <typename UpstreamFn>
void batch_param_grads(const Mlp& net, const std::vector<Vec>& inputs, UpstreamFn&& upstream_fn,
                       MlpGrads& out, bool on_preactivation = false);

// Snapshot format: u64 little-endian header length, JSON header describing
// the contained networks (dims, activations, offsets), then all parameters
// as little-endian 64-bit floats.
void save_networks(const std::map<std::string, const Mlp*>& nets, const std::string& path);
std::map<std::string, Mlp> load_networks(const std::string& path);
void save_mlp(const Mlp& net, const std::string& path);
Mlp load_mlp(const std::string& path);

} // namespace svgg::nn

#include "svgg/nn_batch.inl"
