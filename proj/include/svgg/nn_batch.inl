#pragma once

#include "svgg/parallel.hpp"

namespace svgg::nn {

template <typename UpstreamFn>
void batch_param_grads(const Mlp& net, const std::vector<Vec>& inputs, UpstreamFn&& upstream_fn,
                       MlpGrads& out, bool on_preactivation) {
    out.resize_for(net);
    out.zero();

    const std::ptrdiff_t n = static_cast<std::ptrdiff_t>(inputs.size());

    // single-threaded: accumulate straight into the output; same addition
    // order as the chunked reduction below, so both paths agree bitwise
    if (max_threads() == 1 || !parallel_enabled() || n <= 1) {
        thread_local ForwardCache cache;
        thread_local Vec upstream;
        for (std::ptrdiff_t k = 0; k < n; ++k) {
            const Vec& out_vec = mlp_forward_cached(net, inputs[k], cache);
            upstream_fn(k, out_vec, upstream);
            mlp_backward(net, cache, upstream, out, /*accumulate=*/true, on_preactivation);
        }
        return;
    }

    constexpr std::ptrdiff_t kChunk = 64;
    std::vector<ForwardCache> caches(std::min<std::ptrdiff_t>(n, kChunk));
    std::vector<MlpGrads> partials(std::min<std::ptrdiff_t>(n, kChunk));
    std::vector<Vec> upstreams(std::min<std::ptrdiff_t>(n, kChunk));

    for (std::ptrdiff_t base = 0; base < n; base += kChunk) {
        const std::ptrdiff_t count = std::min<std::ptrdiff_t>(kChunk, n - base);
        parallel_for(count, [&](std::ptrdiff_t k) {
            const Vec& out_vec = mlp_forward_cached(net, inputs[base + k], caches[k]);
            upstream_fn(base + k, out_vec, upstreams[k]);
            mlp_backward(net, caches[k], upstreams[k], partials[k], false, on_preactivation);
        });
        for (std::ptrdiff_t k = 0; k < count; ++k) out.add_scaled(partials[k], 1.0);
    }
}

} // namespace svgg::nn
