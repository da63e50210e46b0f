#pragma once

#include <span>
#include <vector>

#include "svgg/nn.hpp"
#include "svgg/rng.hpp"
#include "svgg/vec.hpp"

namespace svgg::success {

struct Outcome {
    Vec goal;
    bool success = false;
};

// Ring buffer of one (behavioral goal, success) pair per episode.
class OutcomeBuffer {
public:
    explicit OutcomeBuffer(size_t capacity = 1000) : capacity_(capacity) {}

    void push(Vec goal, bool success);
    size_t size() const { return items_.size(); }
    bool empty() const { return items_.empty(); }
    const Outcome& at(size_t i) const { return items_[i]; }

    size_t success_count() const { return successes_; }

private:
    size_t capacity_;
    size_t head_ = 0;
    size_t successes_ = 0;
    std::vector<Outcome> items_;
};

// Trainable estimate of the probability that the current agent reaches a
// goal, with the input gradient needed by the particle transport.
struct SuccessPredictor {
    nn::Mlp net;        // goal dim -> hidden -> 1, sigmoid output
    nn::AdamState adam;

    static SuccessPredictor make(int goal_dim, const std::vector<int>& hidden, double lr, Rng& rng);
};

struct TrainStats {
    double mean_loss = 0.0;         // mean BCE over the last gradient step
    double minority_fraction = 0.0; // class balance of the raw buffer
    double mean_batch_positive_fraction = 0.0; // class balance after oversampling
    bool single_class = false;
};

// n_steps of BCE descent on batches of batch_size drawn uniformly from the
// buffer, the minority class resampled to an expected 50/50 balance. A
// single-class buffer trains as-is (oversampling degenerates); flagged in
// the returned stats.
TrainStats train_success_model(SuccessPredictor& model, const OutcomeBuffer& buffer,
                               int batch_size, int n_steps, Rng& rng);

// probability in (0,1) and its exact gradient w.r.t. the goal
double predict_success_and_grad(const SuccessPredictor& model, std::span<const double> g,
                                std::span<double> grad);
double predict_success(const SuccessPredictor& model, std::span<const double> g);

// -[s log p + (1-s) log(1-p)]
double bce_loss(double p, double target);

} // namespace svgg::success
