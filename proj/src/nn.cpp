#include "nn.hpp"

#include <cmath>
#include <cstring>

namespace cloth {

void MlpSpec::validate() const {
    if (widths.size() < 2) throw ParameterError("MlpSpec: need at least input and output widths");
    for (int w : widths)
        if (w <= 0) throw ParameterError("MlpSpec: widths must be positive");
    if (!(dropout_keep > 0.0 && dropout_keep <= 1.0))
        throw ParameterError("MlpSpec: dropout_keep must be in (0,1]");
}

size_t MlpParams::count() const {
    size_t n = 0;
    for (const auto& w : weights) n += w.data.size();
    for (const auto& b : biases) n += b.size();
    return n;
}

void MlpParams::fill(double v) {
    for (auto& w : weights) std::fill(w.data.begin(), w.data.end(), v);
    for (auto& b : biases) std::fill(b.begin(), b.end(), v);
}

Vec MlpParams::flatten() const {
    Vec flat;
    flat.reserve(count());
    for (size_t l = 0; l < weights.size(); ++l) {
        flat.insert(flat.end(), weights[l].data.begin(), weights[l].data.end());
        flat.insert(flat.end(), biases[l].begin(), biases[l].end());
    }
    return flat;
}

void MlpParams::unflatten(const Vec& flat) {
    if (flat.size() != count()) throw DimensionError("MlpParams::unflatten: size mismatch");
    size_t pos = 0;
    for (size_t l = 0; l < weights.size(); ++l) {
        std::copy(flat.begin() + pos, flat.begin() + pos + weights[l].data.size(), weights[l].data.begin());
        pos += weights[l].data.size();
        std::copy(flat.begin() + pos, flat.begin() + pos + biases[l].size(), biases[l].begin());
        pos += biases[l].size();
    }
}

void MlpParams::add_scaled(const MlpParams& other, double scale) {
    for (size_t l = 0; l < weights.size(); ++l) {
        for (size_t i = 0; i < weights[l].data.size(); ++i) weights[l].data[i] += scale * other.weights[l].data[i];
        for (size_t i = 0; i < biases[l].size(); ++i) biases[l][i] += scale * other.biases[l][i];
    }
}

bool MlpParams::finite() const {
    for (const auto& w : weights)
        if (!all_finite(w)) return false;
    for (const auto& b : biases)
        if (!all_finite(b)) return false;
    return true;
}

MlpParams zeros_like(const MlpSpec& spec) {
    spec.validate();
    MlpParams p;
    for (int l = 0; l < spec.layer_count(); ++l) {
        p.weights.emplace_back(spec.widths[l], spec.widths[l + 1]);
        p.biases.emplace_back(static_cast<size_t>(spec.widths[l + 1]), 0.0);
    }
    return p;
}

MlpParams glorot_init(const MlpSpec& spec, SeededStream& stream) {
    MlpParams p = zeros_like(spec);
    for (int l = 0; l < spec.layer_count(); ++l) {
        const double bound = std::sqrt(6.0 / (spec.widths[l] + spec.widths[l + 1]));
        for (auto& w : p.weights[l].data) w = stream.next_uniform(-bound, bound);
    }
    return p;
}

namespace {

double activate(double x, Activation a) {
    return a == Activation::Relu ? (x > 0.0 ? x : 0.0) : std::tanh(x);
}

double activate_grad(double pre, double post, Activation a) {
    return a == Activation::Relu ? (pre > 0.0 ? 1.0 : 0.0) : 1.0 - post * post;
}

uint64_t params_stamp(const MlpParams& p) {
    // cheap identity stamp: layer shapes + first/last weight bits
    uint64_t h = 0x84222325ull;
    for (const auto& w : p.weights) {
        h = h * 1000003ull + static_cast<uint64_t>(w.rows) * 131ull + static_cast<uint64_t>(w.cols);
        if (!w.data.empty()) {
            uint64_t bits;
            std::memcpy(&bits, &w.data[0], 8);
            h ^= bits;
        }
    }
    return h;
}

}  // namespace

Mat forward(const MlpParams& params, const MlpSpec& spec, const Mat& batch, Mode mode,
            ForwardCache* cache, SeededStream* dropout) {
    spec.validate();
    if (batch.cols != spec.input_width())
        throw DimensionError("forward: batch has " + std::to_string(batch.cols) + " columns, spec expects " +
                             std::to_string(spec.input_width()));
    if (params.weights.size() != static_cast<size_t>(spec.layer_count()))
        throw DimensionError("forward: params do not match spec layer count");

    const int L = spec.layer_count();
    if (cache) {
        cache->input = batch;
        cache->pre.assign(static_cast<size_t>(L), Mat());
        cache->post.assign(static_cast<size_t>(L), Mat());
        cache->mask.assign(static_cast<size_t>(L), Mat());
        cache->mode = mode;
        cache->stamp = params_stamp(params);
    }

    Mat x = batch;
    for (int l = 0; l < L; ++l) {
        Mat z = matmul(x, params.weights[l]);
        for (int i = 0; i < z.rows; ++i) {
            double* zi = z.row_ptr(i);
            for (int j = 0; j < z.cols; ++j) zi[j] += params.biases[l][j];
        }
        if (cache) cache->pre[l] = z;

        const bool last = (l == L - 1);
        Mat h(z.rows, z.cols);
        if (last) {
            if (spec.output_head == Head::Linear) {
                h = z;
            } else {
                for (int i = 0; i < z.rows; ++i) {
                    Vec p = softmax(z.row(i));
                    std::copy(p.begin(), p.end(), h.row_ptr(i));
                }
            }
        } else {
            for (size_t k = 0; k < z.data.size(); ++k) h.data[k] = activate(z.data[k], spec.hidden_activation);
            if (mode == Mode::Train && spec.dropout_keep < 1.0) {
                if (!dropout) throw ContractError("forward: train-mode dropout requires a stream");
                Mat m(z.rows, z.cols);
                const double inv_keep = 1.0 / spec.dropout_keep;
                for (size_t k = 0; k < m.data.size(); ++k)
                    m.data[k] = dropout->next_double() < spec.dropout_keep ? inv_keep : 0.0;
                for (size_t k = 0; k < h.data.size(); ++k) h.data[k] *= m.data[k];
                if (cache) cache->mask[l] = m;
            }
        }
        if (cache) cache->post[l] = h;
        x = std::move(h);
    }
    return x;
}

Gradients backward(const MlpParams& params, const MlpSpec& spec, const ForwardCache& cache,
                   const Mat& grad_outputs) {
    const int L = spec.layer_count();
    if (cache.pre.size() != static_cast<size_t>(L))
        throw ContractError("backward: cache does not match spec");
    if (cache.stamp != 0 && cache.stamp != params_stamp(params))
        throw ContractError("backward: cache was produced by a different forward pass");
    if (!grad_outputs.same_shape(cache.post.back()))
        throw DimensionError("backward: grad_outputs shape mismatch");

    Gradients g;
    g.params = zeros_like(spec);

    // delta = gradient w.r.t. pre-activation of the current layer
    Mat delta;
    {
        const Mat& out = cache.post.back();
        if (spec.output_head == Head::Softmax) {
            delta = Mat(out.rows, out.cols);
            for (int i = 0; i < out.rows; ++i) {
                const double* p = out.row_ptr(i);
                const double* go = grad_outputs.row_ptr(i);
                double inner = 0.0;
                for (int j = 0; j < out.cols; ++j) inner += go[j] * p[j];
                double* d = delta.row_ptr(i);
                for (int j = 0; j < out.cols; ++j) d[j] = p[j] * (go[j] - inner);
            }
        } else {
            delta = grad_outputs;
        }
    }

    for (int l = L - 1; l >= 0; --l) {
        const Mat& layer_in = (l == 0) ? cache.input : cache.post[l - 1];
        g.params.weights[l] = matmul_tn(layer_in, delta);
        for (int j = 0; j < delta.cols; ++j) {
            double s = 0.0;
            for (int i = 0; i < delta.rows; ++i) s += delta(i, j);
            g.params.biases[l][j] = s;
        }
        // propagate to the previous layer's activations
        Mat grad_in(delta.rows, params.weights[l].rows);
        for (int i = 0; i < delta.rows; ++i) {
            const double* di = delta.row_ptr(i);
            double* gi = grad_in.row_ptr(i);
            for (int k = 0; k < params.weights[l].rows; ++k) gi[k] = dot(params.weights[l].row_ptr(k), di, delta.cols);
        }
        if (l == 0) {
            g.inputs = std::move(grad_in);
        } else {
            const Mat& pre = cache.pre[l - 1];
            const Mat& post_raw = cache.post[l - 1];
            const Mat& m = cache.mask[l - 1];
            const bool masked = m.rows > 0;
            delta = Mat(grad_in.rows, grad_in.cols);
            for (int i = 0; i < grad_in.rows; ++i) {
                for (int j = 0; j < grad_in.cols; ++j) {
                    double v = grad_in(i, j);
                    double post = post_raw(i, j);
                    if (masked) {
                        v *= m(i, j);
                        // post stores masked activation; recover the raw one for tanh'
                        if (spec.hidden_activation == Activation::Tanh)
                            post = m(i, j) != 0.0 ? post / m(i, j) : std::tanh(pre(i, j));
                    }
                    delta(i, j) = v * activate_grad(pre(i, j), post, spec.hidden_activation);
                }
            }
        }
    }
    return g;
}

AdamState make_adam(const MlpSpec& spec, double beta1, double beta2, double eps) {
    AdamState s;
    s.m = zeros_like(spec);
    s.v = zeros_like(spec);
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    return s;
}

PolyakShadow make_shadow(const MlpParams& live, double decay) {
    PolyakShadow s;
    s.params = live;
    s.decay = decay;
    return s;
}

void adam_polyak_step(MlpParams& params, const MlpParams& grads, AdamState& adam, PolyakShadow& shadow,
                      double lr) {
    if (!grads.finite()) throw TrainingError("adam_polyak_step: non-finite gradient");
    adam.step += 1;
    const double bc1 = 1.0 - std::pow(adam.beta1, static_cast<double>(adam.step));
    const double bc2 = 1.0 - std::pow(adam.beta2, static_cast<double>(adam.step));
    auto update = [&](Vec& p, const Vec& g, Vec& m, Vec& v) {
        for (size_t i = 0; i < p.size(); ++i) {
            m[i] = adam.beta1 * m[i] + (1.0 - adam.beta1) * g[i];
            v[i] = adam.beta2 * v[i] + (1.0 - adam.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            p[i] -= lr * mhat / (std::sqrt(vhat) + adam.eps);
        }
    };
    for (size_t l = 0; l < params.weights.size(); ++l) {
        update(params.weights[l].data, grads.weights[l].data, adam.m.weights[l].data, adam.v.weights[l].data);
        update(params.biases[l], grads.biases[l], adam.m.biases[l], adam.v.biases[l]);
    }
    const double rho = shadow.decay;
    for (size_t l = 0; l < params.weights.size(); ++l) {
        for (size_t i = 0; i < params.weights[l].data.size(); ++i)
            shadow.params.weights[l].data[i] = rho * shadow.params.weights[l].data[i] + (1.0 - rho) * params.weights[l].data[i];
        for (size_t i = 0; i < params.biases[l].size(); ++i)
            shadow.params.biases[l][i] = rho * shadow.params.biases[l][i] + (1.0 - rho) * params.biases[l][i];
    }
}

double grad_check(const GradFn& loss, const Vec& params, double h, int max_coords, SeededStream* pick) {
    const auto [value, analytic] = loss(params);
    (void)value;
    if (analytic.size() != params.size()) throw DimensionError("grad_check: gradient size mismatch");
    const int n = static_cast<int>(params.size());
    std::vector<int> coords;
    if (max_coords <= 0 || max_coords >= n) {
        coords.resize(static_cast<size_t>(n));
        for (int i = 0; i < n; ++i) coords[i] = i;
    } else {
        SeededStream fallback(17, "grad_check");
        SeededStream& s = pick ? *pick : fallback;
        for (int i = 0; i < max_coords; ++i) coords.push_back(static_cast<int>(s.next_below(static_cast<uint64_t>(n))));
    }
    double worst = 0.0;
    Vec perturbed = params;
    for (int c : coords) {
        perturbed[c] = params[c] + h;
        const double up = loss(perturbed).first;
        perturbed[c] = params[c] - h;
        const double down = loss(perturbed).first;
        perturbed[c] = params[c];
        const double fd = (up - down) / (2.0 * h);
        const double err = std::abs(analytic[c] - fd) / std::max(1e-8, std::abs(fd));
        worst = std::max(worst, err);
    }
    return worst;
}

namespace {
constexpr char kB64[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int b64_value(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}
}  // namespace

std::string encode_doubles_base64(const Vec& v) {
    std::vector<unsigned char> bytes(v.size() * 8);
    for (size_t i = 0; i < v.size(); ++i) {
        uint64_t bits;
        std::memcpy(&bits, &v[i], 8);
        for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>((bits >> (8 * b)) & 0xff);
    }
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    for (size_t i = 0; i < bytes.size(); i += 3) {
        const unsigned b0 = bytes[i];
        const unsigned b1 = i + 1 < bytes.size() ? bytes[i + 1] : 0;
        const unsigned b2 = i + 2 < bytes.size() ? bytes[i + 2] : 0;
        out.push_back(kB64[b0 >> 2]);
        out.push_back(kB64[((b0 & 0x3) << 4) | (b1 >> 4)]);
        out.push_back(i + 1 < bytes.size() ? kB64[((b1 & 0xf) << 2) | (b2 >> 6)] : '=');
        out.push_back(i + 2 < bytes.size() ? kB64[b2 & 0x3f] : '=');
    }
    return out;
}

Vec decode_doubles_base64(const std::string& s) {
    std::vector<unsigned char> bytes;
    bytes.reserve(s.size() / 4 * 3);
    int acc = 0, bits = 0;
    for (char c : s) {
        if (c == '=' || c == '\n' || c == '\r') continue;
        const int v = b64_value(c);
        if (v < 0) throw FormatError("decode_doubles_base64: invalid character");
        acc = (acc << 6) | v;
        bits += 6;
        if (bits >= 8) {
            bits -= 8;
            bytes.push_back(static_cast<unsigned char>((acc >> bits) & 0xff));
        }
    }
    if (bytes.size() % 8 != 0) throw FormatError("decode_doubles_base64: truncated payload");
    Vec out(bytes.size() / 8);
    for (size_t i = 0; i < out.size(); ++i) {
        uint64_t word = 0;
        for (int b = 0; b < 8; ++b) word |= static_cast<uint64_t>(bytes[i * 8 + b]) << (8 * b);
        std::memcpy(&out[i], &word, 8);
    }
    return out;
}

}  // namespace cloth
