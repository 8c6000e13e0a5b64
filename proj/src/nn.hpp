#pragma once

#include <functional>
#include <string>
#include <vector>

#include "numerics.hpp"

namespace cloth {

enum class Activation { Relu, Tanh };
enum class Head { Linear, Softmax };
enum class Mode { Train, Eval };

struct MlpSpec {
    std::vector<int> widths;  // input ... output, at least 2 entries
    Activation hidden_activation = Activation::Relu;
    Head output_head = Head::Linear;
    double dropout_keep = 1.0;  // applied after each hidden activation
    void validate() const;
    int input_width() const { return widths.front(); }
    int output_width() const { return widths.back(); }
    int layer_count() const { return static_cast<int>(widths.size()) - 1; }
};

struct MlpParams {
    std::vector<Mat> weights;  // weights[l] is widths[l] x widths[l+1]
    std::vector<Vec> biases;   // biases[l] has widths[l+1] entries

    size_t count() const;
    void fill(double v);
    Vec flatten() const;
    void unflatten(const Vec& flat);
    void add_scaled(const MlpParams& other, double scale);  // this += scale * other
    bool finite() const;
};

MlpParams zeros_like(const MlpSpec& spec);

// Uniform Glorot init, U(-sqrt(6/(fan_in+fan_out)), +...), biases zero.
MlpParams glorot_init(const MlpSpec& spec, SeededStream& stream);

struct ForwardCache {
    Mat input;
    std::vector<Mat> pre;    // pre-activation per layer
    std::vector<Mat> post;   // post-activation (and post-dropout) per layer; last = outputs
    std::vector<Mat> mask;   // dropout mask/keep per hidden layer (empty rows when unused)
    Mode mode = Mode::Eval;
    uint64_t stamp = 0;      // matches the params object it was produced from
};

// Forward pass over a batch (rows are samples). Train mode samples inverted
// dropout masks from `dropout` (scaled by 1/keep); eval mode applies no mask
// and no extra scaling, so eval outputs are deterministic.
Mat forward(const MlpParams& params, const MlpSpec& spec, const Mat& batch, Mode mode,
            ForwardCache* cache = nullptr, SeededStream* dropout = nullptr);

struct Gradients {
    MlpParams params;  // same shapes as the live parameters
    Mat inputs;        // gradient w.r.t. the batch fed to forward()
};

// Exact reverse-mode gradients of sum_batch <grad_outputs, outputs>.
// `grad_outputs` is d(loss)/d(outputs) for the cached forward pass; the
// softmax head Jacobian is applied here, so grad_outputs is w.r.t. the
// post-softmax probabilities.
Gradients backward(const MlpParams& params, const MlpSpec& spec, const ForwardCache& cache,
                   const Mat& grad_outputs);

struct AdamState {
    MlpParams m;  // first moment
    MlpParams v;  // second moment
    long step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

AdamState make_adam(const MlpSpec& spec, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

struct PolyakShadow {
    MlpParams params;
    double decay = 0.998;
};

PolyakShadow make_shadow(const MlpParams& live, double decay = 0.998);

// Bias-corrected Adam step followed by shadow <- decay*shadow + (1-decay)*params.
// Throws TrainingError on non-finite gradients.
void adam_polyak_step(MlpParams& params, const MlpParams& grads, AdamState& adam, PolyakShadow& shadow,
                      double lr);

// Max over sampled coordinates of |analytic - central difference| relative
// error. `loss` must return (value, analytic gradient as flat vector) and be
// evaluable at perturbed parameters.
using GradFn = std::function<std::pair<double, Vec>(const Vec& flat_params)>;
double grad_check(const GradFn& loss, const Vec& params, double h = 1e-5, int max_coords = 0,
                  SeededStream* pick = nullptr);

// JSON serialization with base64-encoded raw 64-bit words; round-trips are
// bit-exact. Used by the model checkpoint format.
std::string encode_doubles_base64(const Vec& v);
Vec decode_doubles_base64(const std::string& s);

}  // namespace cloth
