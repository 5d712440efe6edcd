#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "sarc/dualstream.hpp"
#include "sarc/patchnet.hpp"

namespace sarc {

struct TrainConfig {
    double lr = 1e-5;
    int batch = 64;
    int epochs = 100;
    uint64_t seed = 1;
    // Hooks present but off by default: the recipe has no decay or schedule.
    double weight_decay = 0.0;
    std::string lr_schedule = "none";
};

inline void validate_train_config(const TrainConfig& c) {
    if (!(c.lr > 0)) throw ConfigError("lr must be > 0");
    if (c.batch < 1) throw ConfigError("batch must be >= 1");
    if (c.epochs < 0) throw ConfigError("epochs must be >= 0");
    if (c.weight_decay < 0) throw ConfigError("weight_decay must be >= 0");
    if (c.lr_schedule != "none") throw ConfigError("lr_schedule 'none' is the only option");
}

struct TrainHistory {
    std::vector<double> train_loss;   // mean per epoch
    std::vector<double> val_metric;   // per epoch; see val_metric_name
    std::vector<double> seconds;      // wall time per epoch
    std::string val_metric_name;      // "val_mse" or "val_cross_entropy"
    int selected_epoch = -1;          // 0-based index of the restored weights; -1 = initial
};

// Mean squared error over plain vectors (the training objective, minus the
// autodiff plumbing).
inline double mse_loss(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.empty()) throw ValidationError("mse on an empty batch");
    if (pred.size() != target.size()) throw ShapeError("mse: length mismatch");
    double s = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        s += d * d;
    }
    return s / pred.size();
}

// One scored training sample with both model inputs already prepared.
struct TrainSample {
    std::string id;
    Tensor<float> raw;    // {3,224,224}
    Tensor<float> stack;  // {3,224,224}
    float label = 0;
};

namespace nn {

// Adam with bias correction. Moments are kept in double regardless of the
// parameter type so long runs don't drift from accumulated rounding.
template <class T>
class Adam {
  public:
    Adam(std::vector<ad::Var<T>> params, double lr, double weight_decay = 0.0,
         double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : params_(std::move(params)), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2),
          eps_(eps) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(params_[i].val().v.size(), 0.0);
            v_[i].assign(params_[i].val().v.size(), 0.0);
        }
    }

    void step() {
        ++t_;
        const double c1 = 1.0 - std::pow(b1_, (double)t_);
        const double c2 = 1.0 - std::pow(b2_, (double)t_);
        for (size_t i = 0; i < params_.size(); ++i) {
            auto& p = params_[i];
            if (!p.has_grad()) continue;
            T* w = p.val().data();
            const T* g = p.grad().data();
            for (size_t j = 0; j < p.val().v.size(); ++j) {
                double gj = (double)g[j] + wd_ * (double)w[j];
                m_[i][j] = b1_ * m_[i][j] + (1 - b1_) * gj;
                v_[i][j] = b2_ * v_[i][j] + (1 - b2_) * gj * gj;
                w[j] = (T)((double)w[j] - lr_ * (m_[i][j] / c1) / (std::sqrt(v_[i][j] / c2) + eps_));
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.clear_grad();
    }

  private:
    std::vector<ad::Var<T>> params_;
    double lr_, wd_, b1_, b2_, eps_;
    int64_t t_ = 0;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
};

}  // namespace nn

namespace detail {

template <class T>
struct WeightSnapshot {
    std::vector<Tensor<T>> params;
    std::vector<Tensor<T>> buffers;

    static WeightSnapshot take(nn::ParamMap<T>& m) {
        WeightSnapshot s;
        for (auto& [name, p] : m.params) s.params.push_back(p.val());
        for (auto& [name, b] : m.buffers) s.buffers.push_back(*b);
        return s;
    }

    void restore(nn::ParamMap<T>& m) const {
        for (size_t i = 0; i < m.params.size(); ++i) m.params[i].second.val() = params[i];
        for (size_t i = 0; i < m.buffers.size(); ++i) *m.buffers[i].second = buffers[i];
    }
};

inline double now_seconds() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

}  // namespace detail

// Train the dual-stream regressor with Adam on MSE. Epochs run over shuffled
// batches (last partial batch kept); after each epoch the model is scored on
// the validation set in eval mode (clamped predictions, MSE), and the weights
// of the best validation epoch are restored before returning. A non-finite
// loss aborts with a diagnostic.
template <class T>
TrainHistory train_dualstream(nn::DualStreamModel<T>& model,
                              const std::vector<TrainSample>& train_set,
                              const std::vector<TrainSample>& val_set, const TrainConfig& cfg,
                              const std::function<void(int, const TrainHistory&)>& on_epoch = {}) {
    validate_train_config(cfg);
    if (train_set.empty()) throw ValidationError("train set is empty");
    if (val_set.empty()) throw ValidationError("validation set is empty");

    auto pmap = model.named_params();
    std::vector<ad::Var<T>> params;
    for (auto& [name, p] : pmap.params) params.push_back(p);
    nn::Adam<T> opt(params, cfg.lr, cfg.weight_decay);

    TrainHistory h;
    h.val_metric_name = "val_mse";

    auto gather = [](const std::vector<TrainSample>& set, const std::vector<int>& idx,
                     size_t start, int nb, Tensor<T>& raw, Tensor<T>& stack,
                     Tensor<T>& labels) {
        raw = Tensor<T>({nb, 3, 224, 224});
        stack = Tensor<T>({nb, 3, 224, 224});
        labels = Tensor<T>({nb});
        const size_t plane = (size_t)3 * 224 * 224;
        for (int b = 0; b < nb; ++b) {
            const TrainSample& s = set[idx[start + b]];
            check_shape(s.raw, {3, 224, 224}, "sample raw");
            check_shape(s.stack, {3, 224, 224}, "sample stack");
            for (size_t i = 0; i < plane; ++i) raw.v[(size_t)b * plane + i] = (T)s.raw.v[i];
            for (size_t i = 0; i < plane; ++i) stack.v[(size_t)b * plane + i] = (T)s.stack.v[i];
            labels.v[b] = (T)s.label;
        }
    };

    auto val_mse = [&]() {
        std::vector<int> idx(val_set.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = (int)i;
        double se = 0;
        for (size_t start = 0; start < val_set.size(); start += (size_t)cfg.batch) {
            const int nb = (int)std::min((size_t)cfg.batch, val_set.size() - start);
            Tensor<T> raw, stack, labels;
            gather(val_set, idx, start, nb, raw, stack, labels);
            auto preds = model.predict(raw, stack);
            for (int b = 0; b < nb; ++b) {
                const double d = preds[b].clamped - (double)labels.v[b];
                se += d * d;
            }
        }
        return se / val_set.size();
    };

    Rng rng(cfg.seed);
    std::vector<int> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = (int)i;

    auto best = detail::WeightSnapshot<T>::take(pmap);
    double best_val = std::numeric_limits<double>::infinity();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double t0 = detail::now_seconds();
        rng.shuffle(order);
        model.training = true;
        double loss_sum = 0;
        for (size_t start = 0; start < order.size(); start += (size_t)cfg.batch) {
            const int nb = (int)std::min((size_t)cfg.batch, order.size() - start);
            Tensor<T> raw, stack, labels;
            gather(train_set, order, start, nb, raw, stack, labels);
            auto out = model.forward(raw, stack);
            auto loss = ad::mse_loss(out, labels);
            const double lv = (double)loss.val().v[0];
            if (!std::isfinite(lv))
                throw TrainError("non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch starting at sample " + std::to_string(start));
            opt.zero_grad();
            ad::backward(loss);
            opt.step();
            loss_sum += lv * nb;
        }
        h.train_loss.push_back(loss_sum / train_set.size());
        const double vm = val_mse();
        h.val_metric.push_back(vm);
        h.seconds.push_back(detail::now_seconds() - t0);
        if (vm < best_val) {
            best_val = vm;
            best = detail::WeightSnapshot<T>::take(pmap);
            h.selected_epoch = epoch;
        }
        if (on_epoch) on_epoch(epoch, h);
    }

    best.restore(pmap);
    return h;
}

// Same loop for the five-way patch classifier: cross-entropy objective,
// validation cross-entropy for selection.
template <class T>
TrainHistory train_patchnet(nn::PatchNet<T>& model, const std::vector<PatchExample>& train_set,
                            const std::vector<PatchExample>& val_set, const TrainConfig& cfg,
                            const std::function<void(int, const TrainHistory&)>& on_epoch = {}) {
    validate_train_config(cfg);
    if (train_set.empty()) throw ValidationError("train set is empty");
    if (val_set.empty()) throw ValidationError("validation set is empty");
    for (const auto& ex : train_set)
        if (ex.class_id < 1 || ex.class_id > 5)
            throw ValidationError("patch class " + std::to_string(ex.class_id) + " outside 1..5");

    auto pmap = model.named_params();
    std::vector<ad::Var<T>> params;
    for (auto& [name, p] : pmap.params) params.push_back(p);
    nn::Adam<T> opt(params, cfg.lr, cfg.weight_decay);

    TrainHistory h;
    h.val_metric_name = "val_cross_entropy";

    // Patches are upsampled once so epochs don't repeat the interpolation.
    auto prep_all = [](const std::vector<PatchExample>& set) {
        std::vector<Tensor<float>> out;
        out.reserve(set.size());
        for (const auto& ex : set) out.push_back(prep_patch_to_input(ex.patch));
        return out;
    };
    const auto train_inputs = prep_all(train_set);
    const auto val_inputs = prep_all(val_set);

    auto gather = [&](const std::vector<Tensor<float>>& inputs,
                      const std::vector<PatchExample>& set, const std::vector<int>& idx,
                      size_t start, int nb, Tensor<T>& x, std::vector<int>& y) {
        x = Tensor<T>({nb, 1, 224, 224});
        y.resize(nb);
        const size_t plane = (size_t)224 * 224;
        for (int b = 0; b < nb; ++b) {
            const auto& in = inputs[idx[start + b]];
            for (size_t i = 0; i < plane; ++i) x.v[(size_t)b * plane + i] = (T)in.v[i];
            y[b] = set[idx[start + b]].class_id - 1;
        }
    };

    auto val_ce = [&]() {
        ad::NoGradGuard ng;
        std::vector<int> idx(val_set.size());
        for (size_t i = 0; i < idx.size(); ++i) idx[i] = (int)i;
        double sum = 0;
        for (size_t start = 0; start < val_set.size(); start += (size_t)cfg.batch) {
            const int nb = (int)std::min((size_t)cfg.batch, val_set.size() - start);
            Tensor<T> x;
            std::vector<int> y;
            gather(val_inputs, val_set, idx, start, nb, x, y);
            auto loss = ad::cross_entropy_logits(model.forward(x), y);
            sum += (double)loss.val().v[0] * nb;
        }
        return sum / val_set.size();
    };

    Rng rng(cfg.seed);
    std::vector<int> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = (int)i;

    auto best = detail::WeightSnapshot<T>::take(pmap);
    double best_val = std::numeric_limits<double>::infinity();

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double t0 = detail::now_seconds();
        rng.shuffle(order);
        double loss_sum = 0;
        for (size_t start = 0; start < order.size(); start += (size_t)cfg.batch) {
            const int nb = (int)std::min((size_t)cfg.batch, order.size() - start);
            Tensor<T> x;
            std::vector<int> y;
            gather(train_inputs, train_set, order, start, nb, x, y);
            auto loss = ad::cross_entropy_logits(model.forward(x), y);
            const double lv = (double)loss.val().v[0];
            if (!std::isfinite(lv))
                throw TrainError("non-finite loss at epoch " + std::to_string(epoch) +
                                 ", batch starting at sample " + std::to_string(start));
            opt.zero_grad();
            ad::backward(loss);
            opt.step();
            loss_sum += lv * nb;
        }
        h.train_loss.push_back(loss_sum / train_set.size());
        const double vm = val_ce();
        h.val_metric.push_back(vm);
        h.seconds.push_back(detail::now_seconds() - t0);
        if (vm < best_val) {
            best_val = vm;
            best = detail::WeightSnapshot<T>::take(pmap);
            h.selected_epoch = epoch;
        }
        if (on_epoch) on_epoch(epoch, h);
    }

    best.restore(pmap);
    return h;
}

}  // namespace sarc
