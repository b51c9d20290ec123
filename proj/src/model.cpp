#include "maldef/model.hpp"

#include "maldef/error.hpp"
#include "maldef/parallel.hpp"
#include "maldef/seed.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>

namespace maldef {

namespace {

constexpr std::size_t F1 = Classifier::conv1_filters;
constexpr std::size_t F2 = Classifier::conv2_filters;
constexpr std::size_t H = Classifier::hidden_units;

// Wider-vector clones of the hot kernels. No FMA contraction, so every clone rounds identically.
#if defined(__x86_64__) && defined(__GNUC__) && !defined(__clang__)
#define MALDEF_SIMD_CLONES __attribute__((target_clones("avx2", "default")))
#else
#define MALDEF_SIMD_CLONES
#endif

// Fixed-order dot product with four independent accumulators.
inline double dot(const double* __restrict a, const double* __restrict b, std::size_t n) noexcept {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    const std::size_t m = n - n % 4;
    std::size_t i = 0;
    for (; i < m; i += 4) {
        s0 += a[i] * b[i];
        s1 += a[i + 1] * b[i + 1];
        s2 += a[i + 2] * b[i + 2];
        s3 += a[i + 3] * b[i + 3];
    }
    for (; i < n; ++i) s0 += a[i] * b[i];
    return (s0 + s1) + (s2 + s3);
}

// Zero-padded 3x3 neighborhood of pixel (y, x) over all input planes, ordered f*9 + ky*3 + kx.
template <std::size_t R>
inline void gather3x3(const double* in, std::size_t n, std::size_t y, std::size_t x, double* c) noexcept {
    const std::size_t nn = n * n;
    const bool up = y > 0, down = y + 1 < n, left = x > 0, right = x + 1 < n;
    for (std::size_t f = 0; f < R / 9; ++f) {
        const double* p = in + f * nn + y * n + x;
        double* o = c + f * 9;
        o[0] = up && left ? p[-static_cast<std::ptrdiff_t>(n) - 1] : 0.0;
        o[1] = up ? p[-static_cast<std::ptrdiff_t>(n)] : 0.0;
        o[2] = up && right ? p[-static_cast<std::ptrdiff_t>(n) + 1] : 0.0;
        o[3] = left ? p[-1] : 0.0;
        o[4] = p[0];
        o[5] = right ? p[1] : 0.0;
        o[6] = down && left ? p[n - 1] : 0.0;
        o[7] = down ? p[n] : 0.0;
        o[8] = down && right ? p[n + 1] : 0.0;
    }
}

// Adjoint of gather3x3.
template <std::size_t R>
inline void scatter3x3(const double* c, std::size_t n, std::size_t y, std::size_t x, double* din) noexcept {
    const std::size_t nn = n * n;
    const bool up = y > 0, down = y + 1 < n, left = x > 0, right = x + 1 < n;
    for (std::size_t f = 0; f < R / 9; ++f) {
        double* p = din + f * nn + y * n + x;
        const double* o = c + f * 9;
        if (up) {
            if (left) p[-static_cast<std::ptrdiff_t>(n) - 1] += o[0];
            p[-static_cast<std::ptrdiff_t>(n)] += o[1];
            if (right) p[-static_cast<std::ptrdiff_t>(n) + 1] += o[2];
        }
        if (left) p[-1] += o[3];
        p[0] += o[4];
        if (right) p[1] += o[5];
        if (down) {
            if (left) p[n - 1] += o[6];
            p[n] += o[7];
            if (right) p[n + 1] += o[8];
        }
    }
}

using v4d = double __attribute__((vector_size(32)));

#define MALDEF_LOAD4(dst, src) std::memcpy(&(dst), (src), sizeof(v4d))

// out[g] = b[g] + sum_r w[g][r] * neighborhood[r]; R = 9 * input planes, G output planes.
template <std::size_t G, std::size_t R>
MALDEF_SIMD_CLONES void conv3x3_forward(const double* in, std::size_t n, const double* w, const double* b, double* out) {
    static_assert(G % 4 == 0);
    constexpr std::size_t V = G / 4;
    alignas(32) double wt[R * G];
    for (std::size_t g = 0; g < G; ++g)
        for (std::size_t r = 0; r < R; ++r) wt[r * G + g] = w[g * R + r];
    const std::size_t nn = n * n;
    double c[R];
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            gather3x3<R>(in, n, y, x, c);
            v4d acc[V];
            for (std::size_t v = 0; v < V; ++v) MALDEF_LOAD4(acc[v], b + 4 * v);
            for (std::size_t r = 0; r < R; ++r) {
                const double cr = c[r];
                const double* wr = wt + r * G;
                for (std::size_t v = 0; v < V; ++v) {
                    v4d wv;
                    MALDEF_LOAD4(wv, wr + 4 * v);
                    acc[v] += cr * wv;
                }
            }
            alignas(32) double res[G];
            std::memcpy(res, acc, sizeof res);
            const std::size_t pix = y * n + x;
            for (std::size_t g = 0; g < G; ++g) out[g * nn + pix] = res[g];
        }
    }
}

// Accumulates weight/bias gradients into dw/db (either may be null) and the input gradient into din.
template <std::size_t G, std::size_t R>
MALDEF_SIMD_CLONES void conv3x3_backward(const double* in, std::size_t n, const double* w, const double* dout, double* dw, double* db,
                      double* din) {
    const std::size_t nn = n * n;
    std::vector<double> dwt(dw ? R * G : 0, 0.0);
    double dbl[G] = {};
    double c[R];
    double dc[R];
    double d[G];
    for (std::size_t y = 0; y < n; ++y) {
        for (std::size_t x = 0; x < n; ++x) {
            const std::size_t pix = y * n + x;
            bool any = false;
            for (std::size_t g = 0; g < G; ++g) {
                d[g] = dout[g * nn + pix];
                any = any || d[g] != 0.0;
            }
            if (!any) continue;
            if (dw) {
                gather3x3<R>(in, n, y, x, c);
                for (std::size_t r = 0; r < R; ++r) {
                    const double cr = c[r];
                    double* row = dwt.data() + r * G;
                    for (std::size_t g = 0; g < G; ++g) row[g] += cr * d[g];
                }
            }
            for (std::size_t g = 0; g < G; ++g) dbl[g] += d[g];
            if (din) {
                for (std::size_t r = 0; r < R; ++r) dc[r] = 0.0;
                for (std::size_t g = 0; g < G; ++g) {
                    const double dg = d[g];
                    const double* wg = w + g * R;
                    for (std::size_t r = 0; r < R; ++r) dc[r] += dg * wg[r];
                }
                scatter3x3<R>(dc, n, y, x, din);
            }
        }
    }
    if (dw)
        for (std::size_t g = 0; g < G; ++g)
            for (std::size_t r = 0; r < R; ++r) dw[g * R + r] += dwt[r * G + g];
    if (db)
        for (std::size_t g = 0; g < G; ++g) db[g] += dbl[g];
}

// relu then 2x2 max pool; records the flat argmax of each pooled cell.
void relu_maxpool(const double* z, std::size_t ch, std::size_t n, double* pooled, std::size_t* arg) {
    const std::size_t m = n / 2;
    for (std::size_t c = 0; c < ch; ++c) {
        const double* plane = z + c * n * n;
        for (std::size_t y = 0; y < m; ++y) {
            for (std::size_t x = 0; x < m; ++x) {
                std::size_t best = (2 * y) * n + 2 * x;
                double v = plane[best];
                const std::size_t cand[3] = {best + 1, best + n, best + n + 1};
                for (std::size_t i : cand)
                    if (plane[i] > v) {
                        v = plane[i];
                        best = i;
                    }
                const std::size_t o = c * m * m + y * m + x;
                pooled[o] = v > 0.0 ? v : 0.0;
                arg[o] = c * n * n + best;
            }
        }
    }
}

struct Trace {
    std::vector<double> z1, p1, z2, p2, z3, a3, z4;
    std::vector<std::size_t> arg1, arg2;
};

} // namespace

Classifier::Classifier(std::size_t input_side, std::size_t classes, std::uint64_t seed)
    : input_side_(input_side), classes_(classes) {
    if (input_side < 4) throw PreconditionError("model input side must be at least 4");
    if (classes < 2) throw PreconditionError("a classifier needs at least 2 classes");
    const std::size_t flat = flat_features();
    Layout& L = layout_;
    L.w1 = 0;
    L.b1 = L.w1 + F1 * 9;
    L.w2 = L.b1 + F1;
    L.b2 = L.w2 + F2 * F1 * 9;
    L.w3 = L.b2 + F2;
    L.b3 = L.w3 + H * flat;
    L.w4 = L.b3 + H;
    L.b4 = L.w4 + classes * H;
    L.total = L.b4 + classes;
    params_.assign(L.total, 0.0);

    std::mt19937_64 rng(seed);
    auto fill = [&](std::size_t off, std::size_t count, std::size_t fan_in) {
        const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-limit, limit);
        for (std::size_t i = 0; i < count; ++i) params_[off + i] = dist(rng);
    };
    fill(L.w1, F1 * 9, 9);
    fill(L.w2, F2 * F1 * 9, F1 * 9);
    fill(L.w3, H * flat, flat);
    fill(L.w4, classes * H, H);
}

std::vector<std::string> Classifier::architecture() {
    return {"conv3x3(8)", "relu", "maxpool2", "conv3x3(16)", "relu", "maxpool2",
            "flatten",    "dense(64)", "relu", "dense(C)", "softmax"};
}

std::size_t Classifier::flat_features() const noexcept {
    const std::size_t q = (input_side_ / 2) / 2;
    return F2 * q * q;
}

void Classifier::set_parameters(std::vector<double> params) {
    if (params.size() != layout_.total)
        throw ShapeError("parameter vector has " + std::to_string(params.size()) + " values, expected " +
                         std::to_string(layout_.total));
    params_ = std::move(params);
}

void Classifier::zero_output_layer() {
    std::fill(params_.begin() + static_cast<std::ptrdiff_t>(layout_.w4), params_.end(), 0.0);
}

void Classifier::check_input(const ResizedImage& img) const {
    if (img.side != input_side_ || img.pixels.size() != input_side_ * input_side_)
        throw ShapeError("input image side " + std::to_string(img.side) + " does not match model input side " +
                         std::to_string(input_side_));
}

namespace {

void run_forward(const Classifier& m, const ResizedImage& img, Trace& t) {
    const auto& L = m.layout();
    const double* P = m.parameters().data();
    const std::size_t n1 = m.input_side();
    const std::size_t n2 = n1 / 2;
    const std::size_t n3 = n2 / 2;
    const std::size_t flat = m.flat_features();
    const std::size_t C = m.classes();

    t.z1.resize(F1 * n1 * n1);
    conv3x3_forward<F1, 9>(img.pixels.data(), n1, P + L.w1, P + L.b1, t.z1.data());
    t.p1.resize(F1 * n2 * n2);
    t.arg1.resize(t.p1.size());
    relu_maxpool(t.z1.data(), F1, n1, t.p1.data(), t.arg1.data());

    t.z2.resize(F2 * n2 * n2);
    conv3x3_forward<F2, F1 * 9>(t.p1.data(), n2, P + L.w2, P + L.b2, t.z2.data());
    t.p2.resize(F2 * n3 * n3);
    t.arg2.resize(t.p2.size());
    relu_maxpool(t.z2.data(), F2, n2, t.p2.data(), t.arg2.data());

    t.z3.resize(H);
    t.a3.resize(H);
    for (std::size_t j = 0; j < H; ++j) {
        const double* w = P + L.w3 + j * flat;
        const double s = P[L.b3 + j] + dot(w, t.p2.data(), flat);
        t.z3[j] = s;
        t.a3[j] = s > 0.0 ? s : 0.0;
    }
    t.z4.resize(C);
    for (std::size_t k = 0; k < C; ++k) {
        const double* w = P + L.w4 + k * H;
        t.z4[k] = P[L.b4 + k] + dot(w, t.a3.data(), H);
    }
}

double log_sum_exp(std::span<const double> z) {
    const double mx = *std::max_element(z.begin(), z.end());
    double s = 0.0;
    for (double v : z) s += std::exp(v - mx);
    return mx + std::log(s);
}

} // namespace

std::vector<double> softmax(std::span<const double> logits) {
    const double lse = log_sum_exp(logits);
    std::vector<double> p(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) p[i] = std::exp(logits[i] - lse);
    return p;
}

double cross_entropy(std::span<const double> probs, std::size_t label) {
    if (label >= probs.size()) throw PreconditionError("label out of range");
    return -std::log(probs[label]);
}

std::vector<double> Classifier::logits(const ResizedImage& img) const {
    check_input(img);
    Trace t;
    run_forward(*this, img, t);
    return t.z4;
}

std::vector<double> Classifier::forward(const ResizedImage& img) const { return softmax(logits(img)); }

std::vector<std::size_t> Classifier::activation_pattern(const ResizedImage& img) const {
    check_input(img);
    Trace t;
    run_forward(*this, img, t);
    std::vector<std::size_t> out;
    out.reserve(2 * (t.arg1.size() + t.arg2.size()) + t.z3.size());
    for (std::size_t i = 0; i < t.arg1.size(); ++i) out.push_back(t.p1[i] > 0.0 ? t.arg1[i] + 1 : 0);
    for (std::size_t i = 0; i < t.arg2.size(); ++i) out.push_back(t.p2[i] > 0.0 ? t.arg2[i] + 1 : 0);
    for (double z : t.z3) out.push_back(z > 0.0);
    return out;
}

double Classifier::backprop(const ResizedImage& img, std::size_t label, std::span<double> param_grad,
                            std::vector<double>* input_grad) const {
    check_input(img);
    if (label >= classes_)
        throw PreconditionError("label " + std::to_string(label) + " out of range for " + std::to_string(classes_) +
                                " classes");
    const bool want_params = !param_grad.empty();
    if (want_params && param_grad.size() != params_.size()) throw ShapeError("parameter gradient size mismatch");

    Trace t;
    run_forward(*this, img, t);
    const auto& L = layout_;
    const double* P = params_.data();
    double* G = want_params ? param_grad.data() : nullptr;
    const std::size_t n1 = input_side_;
    const std::size_t n2 = n1 / 2;
    const std::size_t flat = flat_features();
    const std::size_t C = classes_;

    const double lse = log_sum_exp(t.z4);
    const double loss_value = lse - t.z4[label];

    std::vector<double> dz4(C);
    for (std::size_t k = 0; k < C; ++k) dz4[k] = std::exp(t.z4[k] - lse) - (k == label ? 1.0 : 0.0);

    std::vector<double> dz3(H, 0.0);
    for (std::size_t k = 0; k < C; ++k) {
        const double* w = P + L.w4 + k * H;
        if (G) {
            double* gw = G + L.w4 + k * H;
            for (std::size_t j = 0; j < H; ++j) gw[j] += dz4[k] * t.a3[j];
            G[L.b4 + k] += dz4[k];
        }
        for (std::size_t j = 0; j < H; ++j) dz3[j] += w[j] * dz4[k];
    }
    for (std::size_t j = 0; j < H; ++j)
        if (t.z3[j] <= 0.0) dz3[j] = 0.0;

    std::vector<double> dp2(flat, 0.0);
    for (std::size_t j = 0; j < H; ++j) {
        if (dz3[j] == 0.0) continue;
        const double* w = P + L.w3 + j * flat;
        if (G) {
            double* gw = G + L.w3 + j * flat;
            for (std::size_t i = 0; i < flat; ++i) gw[i] += dz3[j] * t.p2[i];
            G[L.b3 + j] += dz3[j];
        }
        for (std::size_t i = 0; i < flat; ++i) dp2[i] += w[i] * dz3[j];
    }

    // unpool + relu mask
    std::vector<double> dz2(t.z2.size(), 0.0);
    for (std::size_t i = 0; i < dp2.size(); ++i)
        if (t.p2[i] > 0.0) dz2[t.arg2[i]] += dp2[i];

    std::vector<double> dp1(t.p1.size(), 0.0);
    conv3x3_backward<F2, F1 * 9>(t.p1.data(), n2, P + L.w2, dz2.data(), G ? G + L.w2 : nullptr,
                                 G ? G + L.b2 : nullptr, dp1.data());

    std::vector<double> dz1(t.z1.size(), 0.0);
    for (std::size_t i = 0; i < dp1.size(); ++i)
        if (t.p1[i] > 0.0) dz1[t.arg1[i]] += dp1[i];

    double* din = nullptr;
    if (input_grad) {
        input_grad->assign(n1 * n1, 0.0);
        din = input_grad->data();
    }
    if (G || din)
        conv3x3_backward<F1, 9>(img.pixels.data(), n1, P + L.w1, dz1.data(), G ? G + L.w1 : nullptr,
                                G ? G + L.b1 : nullptr, din);
    return loss_value;
}

double loss(const Classifier& model, std::span<const LabeledImage> batch) {
    if (batch.empty()) throw PreconditionError("loss of an empty batch is undefined");
    double total = 0.0;
    for (const auto& ex : batch) {
        if (ex.label >= model.classes())
            throw PreconditionError("label " + std::to_string(ex.label) + " out of range");
        const auto z = model.logits(ex.image);
        total += log_sum_exp(z) - z[ex.label];
    }
    return total / static_cast<double>(batch.size());
}

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0)) throw ManifestError("learning rate must be positive");
    if (!(decay > 0.0)) throw ManifestError("decay factor must be positive");
    if (decay_step == 0) throw ManifestError("decay step must be at least 1 epoch");
    if (epochs == 0) throw ManifestError("epochs must be at least 1");
    if (batch_size == 0) throw ManifestError("batch size must be at least 1");
    if (!(clip_norm >= 0.0)) throw ManifestError("gradient clip norm must be non-negative");
}

double TrainConfig::learning_rate_at(std::size_t epoch) const noexcept {
    return learning_rate * std::pow(decay, static_cast<double>(epoch / decay_step));
}

double accuracy(const Classifier& model, std::span<const LabeledImage> set) {
    if (set.empty()) return 0.0;
    std::vector<std::uint8_t> hit(set.size(), 0);
    parallel_for(set.size(), [&](std::size_t i) {
        const auto z = model.logits(set[i].image);
        const auto best = static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
        hit[i] = best == set[i].label;
    });
    return static_cast<double>(std::accumulate(hit.begin(), hit.end(), std::size_t{0})) /
           static_cast<double>(set.size());
}

TrainResult train(const Classifier& init, std::span<const LabeledImage> train_set,
                  std::span<const LabeledImage> validation_set, const TrainConfig& cfg) {
    cfg.validate();
    if (train_set.empty() || validation_set.empty())
        throw PreconditionError("training and validation sets must be non-empty");
    for (const auto* set : {&train_set, &validation_set})
        for (const auto& ex : *set)
            if (ex.label >= init.classes()) throw PreconditionError("label out of range for model");

    // Fixed shard count keeps the reduction order independent of thread count.
    constexpr std::size_t shards = 8;
    const std::size_t P = init.parameter_count();

    TrainResult result{init, {}, 0};
    Classifier model = init;
    double best_acc = -1.0;
    std::vector<std::size_t> order(train_set.size());
    std::vector<std::vector<double>> shard_grad(shards, std::vector<double>(P));
    std::vector<double> shard_loss(shards);
    std::vector<double> batch_grad(P);

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::mt19937_64 rng(child_seed(cfg.seed, epoch));
        std::shuffle(order.begin(), order.end(), rng);
        const double lr = cfg.learning_rate_at(epoch);
        double epoch_loss = 0.0;

        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t count = std::min(cfg.batch_size, order.size() - start);
            const std::size_t per = (count + shards - 1) / shards;
            parallel_for(shards, [&](std::size_t s) {
                auto& g = shard_grad[s];
                std::fill(g.begin(), g.end(), 0.0);
                shard_loss[s] = 0.0;
                const std::size_t lo = std::min(count, s * per);
                const std::size_t hi = std::min(count, lo + per);
                for (std::size_t i = lo; i < hi; ++i) {
                    const auto& ex = train_set[order[start + i]];
                    shard_loss[s] += model.backprop(ex.image, ex.label, g);
                }
            });
            std::fill(batch_grad.begin(), batch_grad.end(), 0.0);
            for (std::size_t s = 0; s < shards; ++s) {
                epoch_loss += shard_loss[s];
                const auto& g = shard_grad[s];
                for (std::size_t i = 0; i < P; ++i) batch_grad[i] += g[i];
            }
            double scale = lr / static_cast<double>(count);
            if (cfg.clip_norm > 0.0) {
                const double norm = std::sqrt(dot(batch_grad.data(), batch_grad.data(), P)) / static_cast<double>(count);
                if (norm > cfg.clip_norm) scale *= cfg.clip_norm / norm;
            }
            auto params = model.parameters();
            for (std::size_t i = 0; i < P; ++i) params[i] -= scale * batch_grad[i];
            if (!std::isfinite(epoch_loss)) throw TrainingError("training loss became non-finite", epoch);
        }
        for (double v : model.parameters())
            if (!std::isfinite(v)) throw TrainingError("model parameters became non-finite", epoch);

        const double val_acc = accuracy(model, validation_set);
        result.history.push_back({epoch, lr, epoch_loss / static_cast<double>(train_set.size()), val_acc});
        if (val_acc > best_acc) {
            best_acc = val_acc;
            result.model = model;
            result.best_epoch = epoch;
        }
    }
    return result;
}

InputGradient input_gradient(const Classifier& model, std::span<const std::uint8_t> sample, std::size_t label) {
    if (sample.empty()) throw PreconditionError("input gradient of an empty sample");
    const GrayImage img = bytes_to_image(sample);
    const ResizedImage in = resize(img, model.input_side());
    InputGradient out;
    model.backprop(in, label, {}, &out.pixel_gradient);
    const auto full = resize_transpose(out.pixel_gradient, model.input_side(), img.side);
    out.sign.resize(sample.size());
    for (std::size_t i = 0; i < sample.size(); ++i)
        out.sign[i] = static_cast<std::int8_t>(full[i] > 0.0 ? 1 : (full[i] < 0.0 ? -1 : 0));
    return out;
}

} // namespace maldef
