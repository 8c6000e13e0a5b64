#include "config.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

extern char** environ;

namespace cloth {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& field, const std::string& why) {
    throw ConfigError("config: field '" + field + "' " + why);
}

void expect_keys(const json& j, const std::set<std::string>& known, const std::string& scope) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        if (!known.count(it.key()))
            throw ConfigError("config: unknown key '" + (scope.empty() ? it.key() : scope + "." + it.key()) + "'");
    }
}

template <typename T>
void get_to(const json& j, const std::string& key, T& out, const std::string& scope = "") {
    if (!j.contains(key)) return;
    try {
        j.at(key).get_to(out);
    } catch (const json::exception& e) {
        fail(scope.empty() ? key : scope + "." + key, std::string("has the wrong type: ") + e.what());
    }
}

DatasetConfig dataset_from_json(const json& j) {
    if (!j.is_object()) throw ConfigError("config: field 'dataset' must be an object");
    static const std::set<std::string> known = {
        "kind",          "classes",       "n_per_domain",     "dim",
        "mean_radius",   "sigma",         "means",            "sigmas",
        "rotation_deg",  "translation",   "target_proportions",
        "moons_n",       "moons_noise",   "source_images",    "source_labels",
        "target_images", "target_labels", "downsample_to",    "limit",
        "seed"};
    expect_keys(j, known, "dataset");
    DatasetConfig d;
    if (!j.contains("kind")) fail("dataset.kind", "is required");
    get_to(j, "kind", d.kind, "dataset");
    if (d.kind != "gaussian_shift" && d.kind != "two_moons" && d.kind != "idx")
        fail("dataset.kind", "must be one of gaussian_shift|two_moons|idx");
    get_to(j, "classes", d.classes, "dataset");
    get_to(j, "n_per_domain", d.n_per_domain, "dataset");
    get_to(j, "dim", d.dim, "dataset");
    get_to(j, "mean_radius", d.mean_radius, "dataset");
    get_to(j, "sigma", d.sigma, "dataset");
    get_to(j, "means", d.means, "dataset");
    get_to(j, "sigmas", d.sigmas, "dataset");
    get_to(j, "rotation_deg", d.rotation_deg, "dataset");
    get_to(j, "translation", d.translation, "dataset");
    get_to(j, "target_proportions", d.target_proportions, "dataset");
    get_to(j, "moons_n", d.moons_n, "dataset");
    get_to(j, "moons_noise", d.moons_noise, "dataset");
    get_to(j, "source_images", d.source_images, "dataset");
    get_to(j, "source_labels", d.source_labels, "dataset");
    get_to(j, "target_images", d.target_images, "dataset");
    get_to(j, "target_labels", d.target_labels, "dataset");
    get_to(j, "downsample_to", d.downsample_to, "dataset");
    get_to(j, "limit", d.limit, "dataset");
    if (j.contains("seed")) {
        uint64_t s = 0;
        get_to(j, "seed", s, "dataset");
        d.seed = s;
    }
    return d;
}

json dataset_to_json(const DatasetConfig& d) {
    json j;
    j["kind"] = d.kind;
    j["classes"] = d.classes;
    j["n_per_domain"] = d.n_per_domain;
    j["dim"] = d.dim;
    j["mean_radius"] = d.mean_radius;
    j["sigma"] = d.sigma;
    if (!d.means.empty()) j["means"] = d.means;
    if (!d.sigmas.empty()) j["sigmas"] = d.sigmas;
    j["rotation_deg"] = d.rotation_deg;
    if (!d.translation.empty()) j["translation"] = d.translation;
    if (!d.target_proportions.empty()) j["target_proportions"] = d.target_proportions;
    j["moons_n"] = d.moons_n;
    j["moons_noise"] = d.moons_noise;
    if (!d.source_images.empty()) {
        j["source_images"] = d.source_images;
        j["source_labels"] = d.source_labels;
        j["target_images"] = d.target_images;
        j["target_labels"] = d.target_labels;
    }
    j["downsample_to"] = d.downsample_to;
    j["limit"] = d.limit;
    if (d.seed) j["seed"] = *d.seed;
    return j;
}

}  // namespace

void TrainConfig::validate() const {
    if (alpha < 0.0 || beta < 0.0 || gamma < 0.0)
        throw ConfigError("config: alpha, beta, gamma must be nonnegative");
    if (q < 1 || q > 8) throw ConfigError("config: q must be in [1, 8]");
    if (batch_size < 2) throw ConfigError("config: batch_size must be >= 2");
    if (iters < 1) throw ConfigError("config: iters must be >= 1");
    if (log_interval < 1) throw ConfigError("config: log_interval must be >= 1");
    if (lr <= 0.0) throw ConfigError("config: lr must be positive");
    if (latent_dim < 1) throw ConfigError("config: latent_dim must be >= 1");
    if (hidden_activation != "relu" && hidden_activation != "tanh")
        throw ConfigError("config: hidden_activation must be relu|tanh");
    for (double k : {dropout_keep_g, dropout_keep_c, dropout_keep_t, dropout_keep_d})
        if (!(k > 0.0 && k <= 1.0)) throw ConfigError("config: dropout keeps must be in (0,1]");
    if (!(polyak_decay >= 0.0 && polyak_decay < 1.0))
        throw ConfigError("config: polyak_decay must be in [0,1)");
    if (hmm_scale != "inv_p" && hmm_scale != "one") throw ConfigError("config: hmm_scale must be inv_p|one");
    if (sinkhorn_epsilon <= 0.0) throw ConfigError("config: sinkhorn_epsilon must be positive");
    if (!(w_smoothing >= 0.0 && w_smoothing < 1.0)) throw ConfigError("config: w_smoothing must be in [0,1)");
    if (!(val_fraction >= 0.0 && val_fraction < 0.5))
        throw ConfigError("config: val_fraction must be in [0, 0.5)");
    if (binary_discriminator && (enable_t || enable_hmm))
        throw ConfigError("config: binary_discriminator requires enable_t=false and enable_hmm=false");
    if (dataset.kind.empty()) throw ConfigError("config: field 'dataset' is required");
}

double TrainConfig::hmm_scale_value() const { return hmm_scale == "inv_p" ? 1.0 / latent_dim : 1.0; }

TrainConfig config_from_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config: top level must be an object");

    static const std::set<std::string> known = {
        "seed",           "dataset",        "alpha",          "beta",
        "gamma",          "q",              "lr",             "batch_size",
        "iters",          "log_interval",   "latent_dim",     "g_hidden",
        "c_hidden",       "t_hidden",       "d_hidden",       "hidden_activation",
        "dropout_keep_g", "dropout_keep_c", "dropout_keep_t", "dropout_keep_d",
        "dropout_on_latent", "polyak_decay", "adam_beta1",    "adam_beta2",
        "adam_eps",       "clamp_floor",    "hmm_scale",      "share_ct",
        "binary_discriminator", "enable_adv", "enable_t",     "enable_ent",
        "enable_hmm",     "sinkhorn_mode",  "sinkhorn_epsilon", "sinkhorn_max_iter",
        "sinkhorn_tol",   "w_smoothing",    "val_fraction",   "snapshot_best"};
    expect_keys(j, known, "");

    TrainConfig c;
    if (!j.contains("seed")) fail("seed", "is required");
    get_to(j, "seed", c.seed);
    if (!j.contains("dataset")) fail("dataset", "is required");
    c.dataset = dataset_from_json(j.at("dataset"));

    get_to(j, "alpha", c.alpha);
    get_to(j, "beta", c.beta);
    get_to(j, "gamma", c.gamma);
    get_to(j, "q", c.q);
    get_to(j, "lr", c.lr);
    get_to(j, "batch_size", c.batch_size);
    get_to(j, "iters", c.iters);
    get_to(j, "log_interval", c.log_interval);
    get_to(j, "latent_dim", c.latent_dim);
    get_to(j, "g_hidden", c.g_hidden);
    get_to(j, "c_hidden", c.c_hidden);
    get_to(j, "t_hidden", c.t_hidden);
    get_to(j, "d_hidden", c.d_hidden);
    get_to(j, "hidden_activation", c.hidden_activation);
    get_to(j, "dropout_keep_g", c.dropout_keep_g);
    get_to(j, "dropout_keep_c", c.dropout_keep_c);
    get_to(j, "dropout_keep_t", c.dropout_keep_t);
    get_to(j, "dropout_keep_d", c.dropout_keep_d);
    get_to(j, "dropout_on_latent", c.dropout_on_latent);
    get_to(j, "polyak_decay", c.polyak_decay);
    get_to(j, "adam_beta1", c.adam_beta1);
    get_to(j, "adam_beta2", c.adam_beta2);
    get_to(j, "adam_eps", c.adam_eps);
    get_to(j, "clamp_floor", c.clamp_floor);
    get_to(j, "hmm_scale", c.hmm_scale);
    get_to(j, "share_ct", c.share_ct);
    get_to(j, "binary_discriminator", c.binary_discriminator);
    get_to(j, "enable_adv", c.enable_adv);
    get_to(j, "enable_t", c.enable_t);
    get_to(j, "enable_ent", c.enable_ent);
    get_to(j, "enable_hmm", c.enable_hmm);
    get_to(j, "sinkhorn_mode", c.sinkhorn_mode);
    get_to(j, "sinkhorn_epsilon", c.sinkhorn_epsilon);
    get_to(j, "sinkhorn_max_iter", c.sinkhorn_max_iter);
    get_to(j, "sinkhorn_tol", c.sinkhorn_tol);
    get_to(j, "w_smoothing", c.w_smoothing);
    get_to(j, "val_fraction", c.val_fraction);
    get_to(j, "snapshot_best", c.snapshot_best);

    c.validate();
    return c;
}

TrainConfig config_from_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return config_from_json(ss.str());
}

std::string config_to_json(const TrainConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["dataset"] = dataset_to_json(c.dataset);
    j["alpha"] = c.alpha;
    j["beta"] = c.beta;
    j["gamma"] = c.gamma;
    j["q"] = c.q;
    j["lr"] = c.lr;
    j["batch_size"] = c.batch_size;
    j["iters"] = c.iters;
    j["log_interval"] = c.log_interval;
    j["latent_dim"] = c.latent_dim;
    j["g_hidden"] = c.g_hidden;
    j["c_hidden"] = c.c_hidden;
    j["t_hidden"] = c.t_hidden;
    j["d_hidden"] = c.d_hidden;
    j["hidden_activation"] = c.hidden_activation;
    j["dropout_keep_g"] = c.dropout_keep_g;
    j["dropout_keep_c"] = c.dropout_keep_c;
    j["dropout_keep_t"] = c.dropout_keep_t;
    j["dropout_keep_d"] = c.dropout_keep_d;
    j["dropout_on_latent"] = c.dropout_on_latent;
    j["polyak_decay"] = c.polyak_decay;
    j["adam_beta1"] = c.adam_beta1;
    j["adam_beta2"] = c.adam_beta2;
    j["adam_eps"] = c.adam_eps;
    j["clamp_floor"] = c.clamp_floor;
    j["hmm_scale"] = c.hmm_scale;
    j["share_ct"] = c.share_ct;
    j["binary_discriminator"] = c.binary_discriminator;
    j["enable_adv"] = c.enable_adv;
    j["enable_t"] = c.enable_t;
    j["enable_ent"] = c.enable_ent;
    j["enable_hmm"] = c.enable_hmm;
    j["sinkhorn_mode"] = c.sinkhorn_mode;
    j["sinkhorn_epsilon"] = c.sinkhorn_epsilon;
    j["sinkhorn_max_iter"] = c.sinkhorn_max_iter;
    j["sinkhorn_tol"] = c.sinkhorn_tol;
    j["w_smoothing"] = c.w_smoothing;
    j["val_fraction"] = c.val_fraction;
    j["snapshot_best"] = c.snapshot_best;
    return j.dump(2);
}

std::string config_hash(const TrainConfig& cfg) {
    const std::string canon = config_to_json(cfg);
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : canon) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

void config_apply_override(TrainConfig& cfg, const std::string& key, const std::string& value) {
    json j = json::parse(config_to_json(cfg));
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value;  // bare strings pass through
    }
    json* node = &j;
    std::string rest = key;
    size_t dotpos;
    while ((dotpos = rest.find('.')) != std::string::npos) {
        const std::string head = rest.substr(0, dotpos);
        if (!node->contains(head)) (*node)[head] = json::object();
        node = &(*node)[head];
        rest = rest.substr(dotpos + 1);
    }
    (*node)[rest] = parsed;
    cfg = config_from_json(j.dump());
}

void config_apply_env(TrainConfig& cfg, const char* prefix) {
    const std::string pre(prefix);
    for (char** e = environ; *e != nullptr; ++e) {
        const std::string entry(*e);
        if (entry.rfind(pre, 0) != 0) continue;
        const size_t eq = entry.find('=');
        if (eq == std::string::npos) continue;
        std::string key = entry.substr(pre.size(), eq - pre.size());
        const std::string value = entry.substr(eq + 1);
        std::transform(key.begin(), key.end(), key.begin(), [](unsigned char ch) { return std::tolower(ch); });
        size_t pos;
        while ((pos = key.find("__")) != std::string::npos) key.replace(pos, 2, ".");
        config_apply_override(cfg, key, value);
    }
}

DomainPair build_datasets(const TrainConfig& cfg) {
    const DatasetConfig& d = cfg.dataset;
    const uint64_t seed = d.seed.value_or(cfg.seed);
    if (d.kind == "gaussian_shift") {
        SyntheticSpec spec;
        spec.class_count = d.classes;
        spec.n_per_domain = d.n_per_domain;
        spec.dim = d.dim;
        spec.means = d.means;
        if (!d.sigmas.empty())
            spec.sigmas = d.sigmas;
        spec.mean_radius = d.mean_radius;
        spec.noise_scale = d.sigma;
        spec.rotation_deg = d.rotation_deg;
        spec.translation = d.translation;
        spec.target_proportions = d.target_proportions;
        spec.seed = seed;
        return make_gaussian_shift(spec);
    }
    if (d.kind == "two_moons") {
        return make_two_moons_rotated(d.moons_n, d.rotation_deg, d.moons_noise, seed);
    }
    if (d.kind == "idx") {
        DomainPair pair;
        pair.source = load_idx(d.source_images, d.source_labels, d.downsample_to, d.limit, DomainTag::Source);
        pair.target = load_idx(d.target_images, d.target_labels, d.downsample_to, d.limit, DomainTag::Target);
        return pair;
    }
    throw ConfigError("config: unsupported dataset kind '" + d.kind + "'");
}

}  // namespace cloth
