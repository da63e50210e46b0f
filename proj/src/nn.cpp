#include "svgg/nn.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <json.hpp>

namespace svgg::nn {

namespace {

constexpr double kGeluC = 0.7978845608028654; // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

inline double sigmoid_raw(double x) { return 1.0 / (1.0 + std::exp(-x)); }

// keep outputs strictly inside (0,1) even for saturated logits
inline double sigmoid_clamped(double x) {
    const double s = sigmoid_raw(x);
    const double lo = std::numeric_limits<double>::min();
    const double hi = 1.0 - std::numeric_limits<double>::epsilon() / 2.0;
    return std::min(std::max(s, lo), hi);
}

inline double gelu(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    return 0.5 * x * (1.0 + std::tanh(u));
}

inline double gelu_derivative(double x) {
    const double u = kGeluC * (x + kGeluA * x * x * x);
    const double t = std::tanh(u);
    const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

// four independent accumulators keep the sum order fixed while letting the
// compiler vectorize the reduction
inline double dot_fast(const double* a, const double* b, int n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    double s = (s0 + s1) + (s2 + s3);
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

// activation switch hoisted out of the element loops; GELU stores tanh(u)
// so backward never recomputes it
void apply_activation(Activation act, const double* pre, double* out, Vec* gelu_t, int n) {
    switch (act) {
        case Activation::Identity:
            for (int i = 0; i < n; ++i) out[i] = pre[i];
            return;
        case Activation::Relu:
            for (int i = 0; i < n; ++i) out[i] = pre[i] > 0.0 ? pre[i] : 0.0;
            return;
        case Activation::Gelu: {
            gelu_t->resize(n);
            double* tc = gelu_t->data();
            for (int i = 0; i < n; ++i) {
                const double x = pre[i];
                const double t = std::tanh(kGeluC * (x + kGeluA * x * x * x));
                tc[i] = t;
                out[i] = 0.5 * x * (1.0 + t);
            }
            return;
        }
        case Activation::Tanh:
            for (int i = 0; i < n; ++i) out[i] = std::tanh(pre[i]);
            return;
        case Activation::Sigmoid:
            for (int i = 0; i < n; ++i) out[i] = sigmoid_clamped(pre[i]);
            return;
    }
}

// delta[i] *= act'(pre[i]), reusing the forward-pass activations
void scale_by_activation_derivative(Activation act, const double* pre, const double* act_out,
                                    const Vec* gelu_t, double* delta, int n) {
    switch (act) {
        case Activation::Identity:
            return;
        case Activation::Relu:
            for (int i = 0; i < n; ++i) delta[i] = pre[i] > 0.0 ? delta[i] : 0.0;
            return;
        case Activation::Gelu: {
            const double* tc = gelu_t->data();
            for (int i = 0; i < n; ++i) {
                const double x = pre[i];
                const double t = tc[i];
                const double du = kGeluC * (1.0 + 3.0 * kGeluA * x * x);
                delta[i] *= 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
            }
            return;
        }
        case Activation::Tanh:
            for (int i = 0; i < n; ++i) {
                const double t = act_out[i];
                delta[i] *= 1.0 - t * t;
            }
            return;
        case Activation::Sigmoid:
            for (int i = 0; i < n; ++i) {
                const double s = act_out[i];
                delta[i] *= s * (1.0 - s);
            }
            return;
    }
}

} // namespace

const char* activation_name(Activation a) {
    switch (a) {
        case Activation::Identity: return "identity";
        case Activation::Relu: return "relu";
        case Activation::Gelu: return "gelu";
        case Activation::Tanh: return "tanh";
        case Activation::Sigmoid: return "sigmoid";
    }
    return "identity";
}

Activation activation_from_name(const std::string& name) {
    if (name == "identity") return Activation::Identity;
    if (name == "relu") return Activation::Relu;
    if (name == "gelu") return Activation::Gelu;
    if (name == "tanh") return Activation::Tanh;
    if (name == "sigmoid") return Activation::Sigmoid;
    throw std::invalid_argument("unknown activation: " + name);
}

double activate(Activation a, double x) {
    switch (a) {
        case Activation::Identity: return x;
        case Activation::Relu: return x > 0.0 ? x : 0.0;
        case Activation::Gelu: return gelu(x);
        case Activation::Tanh: return std::tanh(x);
        case Activation::Sigmoid: return sigmoid_clamped(x);
    }
    return x;
}

double activate_derivative(Activation a, double x) {
    switch (a) {
        case Activation::Identity: return 1.0;
        case Activation::Relu: return x > 0.0 ? 1.0 : 0.0;
        case Activation::Gelu: return gelu_derivative(x);
        case Activation::Tanh: {
            const double t = std::tanh(x);
            return 1.0 - t * t;
        }
        case Activation::Sigmoid: {
            const double s = sigmoid_clamped(x);
            return s * (1.0 - s);
        }
    }
    return 1.0;
}

Mlp Mlp::make(std::vector<int> dims, Activation hidden, Activation output) {
    if (dims.size() < 2) throw std::invalid_argument("Mlp needs at least input and output dims");
    for (int d : dims)
        if (d <= 0) throw std::invalid_argument("Mlp layer dimensions must be positive");
    Mlp net;
    net.dims = std::move(dims);
    net.hidden_act = hidden;
    net.output_act = output;
    size_t total = 0;
    net.layer_offset.resize(net.layer_count());
    for (int l = 0; l < net.layer_count(); ++l) {
        net.layer_offset[l] = total;
        total += static_cast<size_t>(net.dims[l + 1]) * net.dims[l] + net.dims[l + 1];
    }
    net.params.assign(total, 0.0);
    return net;
}

std::span<double> Mlp::weight(int layer) {
    const size_t n = static_cast<size_t>(dims[layer + 1]) * dims[layer];
    return {params.data() + layer_offset[layer], n};
}

std::span<const double> Mlp::weight(int layer) const {
    const size_t n = static_cast<size_t>(dims[layer + 1]) * dims[layer];
    return {params.data() + layer_offset[layer], n};
}

std::span<double> Mlp::bias(int layer) {
    const size_t n_w = static_cast<size_t>(dims[layer + 1]) * dims[layer];
    return {params.data() + layer_offset[layer] + n_w, static_cast<size_t>(dims[layer + 1])};
}

std::span<const double> Mlp::bias(int layer) const {
    const size_t n_w = static_cast<size_t>(dims[layer + 1]) * dims[layer];
    return {params.data() + layer_offset[layer] + n_w, static_cast<size_t>(dims[layer + 1])};
}

void init_uniform_fanin(Mlp& net, Rng& rng) {
    for (int l = 0; l < net.layer_count(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(net.dims[l]));
        for (double& w : net.weight(l)) w = rng.uniform(-bound, bound);
        for (double& b : net.bias(l)) b = 0.0;
    }
}

Vec mlp_forward(const Mlp& net, std::span<const double> input) {
    ForwardCache cache;
    return mlp_forward_cached(net, input, cache);
}

const Vec& mlp_forward_cached(const Mlp& net, std::span<const double> input, ForwardCache& cache) {
    if (static_cast<int>(input.size()) != net.input_dim())
        throw std::invalid_argument("mlp_forward: input has size " + std::to_string(input.size()) +
                                    ", expected " + std::to_string(net.input_dim()));
    const int L = net.layer_count();
    cache.pre.resize(L);
    cache.act.resize(L + 1);
    cache.act[0].assign(input.begin(), input.end());

    for (int l = 0; l < L; ++l) {
        const int out_n = net.dims[l + 1];
        const int in_n = net.dims[l];
        const double* W = net.params.data() + net.layer_offset[l];
        const double* b = W + static_cast<size_t>(out_n) * in_n;
        const double* x = cache.act[l].data();
        cache.pre[l].resize(out_n);
        cache.act[l + 1].resize(out_n);
        for (int o = 0; o < out_n; ++o)
            cache.pre[l][o] = b[o] + dot_fast(W + static_cast<size_t>(o) * in_n, x, in_n);
        const Activation act = (l == L - 1) ? net.output_act : net.hidden_act;
        apply_activation(act, cache.pre[l].data(), cache.act[l + 1].data(), out_n);
    }
    return cache.act[L];
}

void MlpGrads::resize_for(const Mlp& net) {
    params.resize(net.param_count());
    input.resize(net.input_dim());
}

void MlpGrads::zero() {
    std::fill(params.begin(), params.end(), 0.0);
    std::fill(input.begin(), input.end(), 0.0);
}

void MlpGrads::add_scaled(const MlpGrads& other, double scale) {
    axpy(scale, other.params, params);
    axpy(scale, other.input, input);
}

namespace {

// shared delta-propagation core; parameter-gradient writes are optional
template <bool WithParams>
void backward_impl(const Mlp& net, const ForwardCache& cache, std::span<const double> upstream,
                   MlpGrads* out, Vec* input_grad, bool on_preactivation) {
    const int L = net.layer_count();
    if (static_cast<int>(upstream.size()) != net.output_dim())
        throw std::invalid_argument("mlp_backward: upstream has size " + std::to_string(upstream.size()) +
                                    ", expected " + std::to_string(net.output_dim()));

    // delta = dLoss/d(pre-activation of current layer)
    thread_local Vec delta, next_delta;
    delta.assign(upstream.begin(), upstream.end());
    if (!on_preactivation)
        scale_by_activation_derivative(net.output_act, cache.pre[L - 1].data(), delta.data(),
                                       net.output_dim());

    for (int l = L - 1; l >= 0; --l) {
        const int out_n = net.dims[l + 1];
        const int in_n = net.dims[l];
        const double* W = net.params.data() + net.layer_offset[l];
        const double* x = cache.act[l].data();

        double check = 0.0;
        for (int o = 0; o < out_n; ++o) check += delta[o];
        if (!std::isfinite(check))
            throw std::runtime_error("mlp_backward: non-finite gradient at layer " + std::to_string(l));

        next_delta.assign(in_n, 0.0);
        for (int o = 0; o < out_n; ++o) {
            const double d = delta[o];
            const double* row = W + static_cast<size_t>(o) * in_n;
            if constexpr (WithParams) {
                double* gW = out->params.data() + net.layer_offset[l];
                double* grow = gW + static_cast<size_t>(o) * in_n;
                gW[static_cast<size_t>(out_n) * in_n + o] += d; // bias slot
                for (int i = 0; i < in_n; ++i) {
                    grow[i] += d * x[i];
                    next_delta[i] += d * row[i];
                }
            } else {
                for (int i = 0; i < in_n; ++i) next_delta[i] += d * row[i];
            }
        }

        if (l > 0) {
            delta.assign(next_delta.begin(), next_delta.end());
            scale_by_activation_derivative(net.hidden_act, cache.pre[l - 1].data(), delta.data(),
                                           in_n);
        } else {
            for (int i = 0; i < in_n; ++i) {
                if constexpr (WithParams)
                    out->input[i] += next_delta[i];
                else
                    (*input_grad)[i] += next_delta[i];
            }
        }
    }
}

} // namespace

void mlp_backward(const Mlp& net, const ForwardCache& cache, std::span<const double> upstream,
                  MlpGrads& out, bool accumulate, bool on_preactivation) {
    out.resize_for(net);
    if (!accumulate) out.zero();
    backward_impl<true>(net, cache, upstream, &out, nullptr, on_preactivation);
}

void mlp_backward_input(const Mlp& net, const ForwardCache& cache, std::span<const double> upstream,
                        Vec& input_grad, bool on_preactivation) {
    input_grad.assign(net.input_dim(), 0.0);
    backward_impl<false>(net, cache, upstream, nullptr, &input_grad, on_preactivation);
}

MlpGrads mlp_backward(const Mlp& net, std::span<const double> input, std::span<const double> upstream) {
    ForwardCache cache;
    mlp_forward_cached(net, input, cache);
    MlpGrads out;
    mlp_backward(net, cache, upstream, out);
    return out;
}

AdamState AdamState::make(size_t n, double lr) {
    AdamState st;
    st.m.assign(n, 0.0);
    st.v.assign(n, 0.0);
    st.lr = lr;
    return st;
}

void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw std::invalid_argument("adam_step: parameter/gradient/moment sizes disagree");
    state.step += 1;
    const double b1 = state.beta1, b2 = state.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
    for (size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        state.m[i] = b1 * state.m[i] + (1.0 - b1) * g;
        state.v[i] = b2 * state.v[i] + (1.0 - b2) * g * g;
        const double mhat = state.m[i] / c1;
        const double vhat = state.v[i] / c2;
        params[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
}

namespace {

nlohmann::json net_header(const std::string& name, const Mlp& net, size_t offset) {
    nlohmann::json j;
    j["name"] = name;
    j["dims"] = net.dims;
    j["hidden"] = activation_name(net.hidden_act);
    j["output"] = activation_name(net.output_act);
    j["offset"] = offset;
    j["count"] = net.param_count();
    return j;
}

void write_u64_le(std::ofstream& f, uint64_t v) {
    unsigned char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xff);
    f.write(reinterpret_cast<const char*>(buf), 8);
}

uint64_t read_u64_le(std::ifstream& f) {
    unsigned char buf[8];
    f.read(reinterpret_cast<char*>(buf), 8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(buf[i]) << (8 * i);
    return v;
}

void write_doubles_le(std::ofstream& f, std::span<const double> vals) {
    for (double d : vals) {
        uint64_t bits;
        std::memcpy(&bits, &d, 8);
        unsigned char buf[8];
        for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
        f.write(reinterpret_cast<const char*>(buf), 8);
    }
}

void read_doubles_le(std::ifstream& f, std::span<double> vals) {
    for (double& d : vals) {
        unsigned char buf[8];
        f.read(reinterpret_cast<char*>(buf), 8);
        uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(buf[i]) << (8 * i);
        std::memcpy(&d, &bits, 8);
    }
}

} // namespace

void save_networks(const std::map<std::string, const Mlp*>& nets, const std::string& path) {
    nlohmann::json header;
    header["format"] = "svgg-mlp-v1";
    header["networks"] = nlohmann::json::array();
    size_t offset = 0;
    for (const auto& [name, net] : nets) {
        header["networks"].push_back(net_header(name, *net, offset));
        offset += net->param_count();
    }
    const std::string hs = header.dump();

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open for writing: " + path);
    write_u64_le(f, hs.size());
    f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
    for (const auto& [name, net] : nets) write_doubles_le(f, net->params);
    if (!f) throw std::runtime_error("write failed: " + path);
}

std::map<std::string, Mlp> load_networks(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot open: " + path);
    const uint64_t hlen = read_u64_le(f);
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw std::runtime_error("truncated header: " + path);
    const auto header = nlohmann::json::parse(hs);
    if (header.value("format", "") != "svgg-mlp-v1")
        throw std::runtime_error("unrecognized snapshot format in " + path);

    std::map<std::string, Mlp> out;
    for (const auto& jn : header.at("networks")) {
        Mlp net = Mlp::make(jn.at("dims").get<std::vector<int>>(),
                            activation_from_name(jn.at("hidden").get<std::string>()),
                            activation_from_name(jn.at("output").get<std::string>()));
        if (net.param_count() != jn.at("count").get<size_t>())
            throw std::runtime_error("snapshot parameter count mismatch in " + path);
        out.emplace(jn.at("name").get<std::string>(), std::move(net));
    }
    // parameters are stored in header order
    for (const auto& jn : header.at("networks")) {
        Mlp& net = out.at(jn.at("name").get<std::string>());
        read_doubles_le(f, net.params);
    }
    if (!f) throw std::runtime_error("truncated parameters: " + path);
    return out;
}

void save_mlp(const Mlp& net, const std::string& path) {
    save_networks({{"net", &net}}, path);
}

Mlp load_mlp(const std::string& path) {
    auto nets = load_networks(path);
    if (nets.size() != 1) throw std::runtime_error("expected a single network in " + path);
    return std::move(nets.begin()->second);
}

} // namespace svgg::nn
