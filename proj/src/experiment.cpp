#include "secc/experiment.hpp"

#include "secc/errors.hpp"
#include "secc/svg.hpp"
#include "secc/textio.hpp"

#include <algorithm>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>

namespace fs = std::filesystem;

namespace secc {

namespace {

class KeyValues {
public:
    explicit KeyValues(const std::string& text) {
        std::istringstream in(text);
        std::string line;
        int line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            const size_t hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            const size_t eq = trimmed.find('=');
            if (eq == std::string::npos) {
                throw ConfigError("line " + std::to_string(line_no),
                                  "config line " + std::to_string(line_no) + " is not key=value");
            }
            values_[trim(trimmed.substr(0, eq))] = trim(trimmed.substr(eq + 1));
        }
    }

    bool has(const std::string& key) const { return values_.count(key) > 0; }

    std::string require(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError(key, "missing required config key: " + key);
        return it->second;
    }

    std::string get(const std::string& key, const std::string& fallback) const {
        auto it = values_.find(key);
        return it == values_.end() ? fallback : it->second;
    }

    double number(const std::string& key, double fallback) const {
        if (!has(key)) return fallback;
        return number(key);
    }

    double number(const std::string& key) const {
        try {
            return parse_double(require(key), key);
        } catch (const ValidationError& e) {
            throw ConfigError(key, e.what());
        }
    }

    long integer(const std::string& key, long fallback) const {
        if (!has(key)) return fallback;
        return integer(key);
    }

    long integer(const std::string& key) const {
        try {
            return parse_long(require(key), key);
        } catch (const ValidationError& e) {
            throw ConfigError(key, e.what());
        }
    }

    bool flag(const std::string& key, bool fallback) const {
        if (!has(key)) return fallback;
        const std::string v = require(key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError(key, key + " must be true/false");
    }

private:
    static std::string trim(const std::string& s) {
        size_t a = s.find_first_not_of(" \t\r");
        size_t b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
    }

    std::map<std::string, std::string> values_;
};

std::vector<std::string> ablation_dir_names() { return {"SE", "CE", "KL", "SECC"}; }

void write_seed_artifacts(const OpenSetTask& task, const TrainState& state,
                          const MetricsReport& metrics, const std::string& dir) {
    fs::create_directories(dir);
    write_text_file(dir + "/metrics.csv", metrics_to_csv(metrics));
    write_text_file(dir + "/history.csv", history_to_csv(state.history));

    // Learnt pooled features of every target sample, projected to 2-D.
    std::vector<Vec> pooled;
    pooled.reserve(task.target.size());
    for (const Sample& s : task.target) {
        pooled.push_back(forward_shared(state.model.student.shared, state.model.spec,
                                        state.model.standardize(s.features))
                             .pooled);
    }
    const auto proj = project_2d(pooled);
    const PredictMode mode = resolve_eval_mode(state.cfg, task.partition);
    const std::vector<int> preds =
        predict_all(state.model, task.target, mode, state.cfg.reject_threshold, task.partition);
    const std::vector<int>& truth_raw = task.target_truth_for_eval();
    const int unk = task.partition.unknown_eval_id();

    std::ostringstream csv;
    csv << "id,true_label,pred_label,px,py\n";
    std::vector<ScatterPoint> points;
    for (size_t i = 0; i < proj.size(); ++i) {
        // -1 marks the aggregated unknown class in both label columns.
        const int t_eval = task.partition.to_eval(truth_raw[i]);
        const int t = t_eval == unk ? -1 : t_eval;
        const int p = preds[i] == unk ? -1 : preds[i];
        csv << i << ',' << t << ',' << p << ',' << fmt17(proj[i][0]) << ',' << fmt17(proj[i][1])
            << '\n';
        points.push_back(ScatterPoint{proj[i][0], proj[i][1], t < 0 ? 0 : t, t < 0});
    }
    write_text_file(dir + "/projection.csv", csv.str());
    write_text_file(dir + "/projection.svg", render_scatter(points));
}

std::map<std::string, std::vector<double>> metric_columns(const std::vector<SeedResult>& results,
                                                          bool include_macro) {
    std::map<std::string, std::vector<double>> cols;
    for (const SeedResult& r : results) {
        cols["os"].push_back(r.metrics.os);
        if (r.metrics.os_star_defined) cols["os_star"].push_back(r.metrics.os_star);
        cols["knwn"].push_back(r.metrics.knwn);
        cols["mean"].push_back(r.metrics.mean);
        cols["overall"].push_back(r.metrics.overall);
        if (include_macro) cols["os_macro"].push_back(r.metrics.os_macro);
    }
    return cols;
}

} // namespace

double median(std::vector<double> values) {
    if (values.empty()) throw ValidationError("median of an empty set");
    std::sort(values.begin(), values.end());
    const size_t n = values.size();
    return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

void ExperimentConfig::validate() const {
    task.validate();
    train.validate();
    if (seeds.empty()) throw ConfigError("seeds", "seeds must be nonempty");
    std::set<std::uint64_t> unique(seeds.begin(), seeds.end());
    if (unique.size() != seeds.size()) throw ConfigError("seeds", "seeds must be distinct");
    if (out_dir.empty()) throw ConfigError("out_dir", "out_dir must be nonempty");
}

ExperimentConfig parse_experiment_config(const std::string& text) {
    const KeyValues kv(text);
    ExperimentConfig cfg;

    cfg.task.d = static_cast<int>(kv.integer("task.d"));
    cfg.task.classes_known = static_cast<int>(kv.integer("task.known"));
    cfg.task.classes_unk_src = static_cast<int>(kv.integer("task.unk_src"));
    cfg.task.classes_unk_tgt = static_cast<int>(kv.integer("task.unk_tgt"));
    cfg.task.samples_per_class = static_cast<int>(kv.integer("task.samples_per_class"));
    cfg.task.unk_tgt_samples_per_class =
        static_cast<int>(kv.integer("task.unk_tgt_samples_per_class", 0));
    cfg.task.shift.rotation_deg = kv.number("task.rotation_deg", 0.0);
    if (kv.has("task.translation")) {
        cfg.task.shift.translation.clear();
        for (const std::string& part : split(kv.require("task.translation"), ',')) {
            try {
                cfg.task.shift.translation.push_back(parse_double(part, "task.translation"));
            } catch (const ValidationError& e) {
                throw ConfigError("task.translation", e.what());
            }
        }
    }
    cfg.task.shift.noise_std = kv.number("task.shift_noise_std", 0.0);
    cfg.task.spread = kv.number("task.spread", cfg.task.spread);
    cfg.task.blob_std = kv.number("task.blob_std", cfg.task.blob_std);
    cfg.task.ring_growth = kv.number("task.ring_growth", cfg.task.ring_growth);
    cfg.task.layout_seed = kv.integer("task.layout_seed", cfg.task.layout_seed);
    cfg.task.unk_src_clearance = kv.number("task.unk_src_clearance", cfg.task.unk_src_clearance);
    cfg.task.unk_tgt_offset = kv.number("task.unk_tgt_offset", cfg.task.unk_tgt_offset);
    cfg.task.paired_filler_dist = kv.number("task.paired_filler_dist", cfg.task.paired_filler_dist);
    cfg.task.angle_jitter_deg = kv.number("task.angle_jitter_deg", cfg.task.angle_jitter_deg);
    if (kv.flag("task.visda_ratio", false)) apply_visda_ratio(cfg.task);

    cfg.train.lr = kv.number("train.lr");
    cfg.train.batch_size = static_cast<int>(kv.integer("train.batch_size"));
    cfg.train.epochs = static_cast<int>(kv.integer("train.epochs"));
    cfg.train.momentum = kv.number("train.momentum", cfg.train.momentum);
    cfg.train.ema_decay = kv.number("train.ema_decay", cfg.train.ema_decay);
    cfg.train.rho = kv.number("train.rho", cfg.train.rho);
    cfg.train.alpha = kv.number("train.alpha", cfg.train.alpha);
    cfg.train.beta = kv.number("train.beta", cfg.train.beta);
    if (kv.get("train.k", "auto") == "auto") {
        cfg.train.K = 0;
    } else {
        cfg.train.K = static_cast<int>(kv.integer("train.k"));
    }
    cfg.train.k_auto_min = static_cast<int>(kv.integer("train.k_min", cfg.train.k_auto_min));
    cfg.train.k_auto_max = static_cast<int>(kv.integer("train.k_max", cfg.train.k_auto_max));
    cfg.train.k_auto_refs = static_cast<int>(kv.integer("train.k_refs", cfg.train.k_auto_refs));
    cfg.train.refresh_interval =
        static_cast<int>(kv.integer("train.refresh_interval", cfg.train.refresh_interval));
    cfg.train.use_se = kv.flag("train.use_se", cfg.train.use_se);
    cfg.train.use_cde = kv.flag("train.use_cde", cfg.train.use_cde);
    cfg.train.use_kl = kv.flag("train.use_kl", cfg.train.use_kl);
    cfg.train.use_mim = kv.flag("train.use_mim", cfg.train.use_mim);
    cfg.train.aug_source = kv.flag("train.aug_source", cfg.train.aug_source);
    cfg.train.constraint_weight = kv.number("train.constraint_weight", cfg.train.constraint_weight);
    cfg.train.aug.noise_std = kv.number("train.aug.noise_std", cfg.train.aug.noise_std);
    cfg.train.aug.flip_prob = kv.number("train.aug.flip_prob", cfg.train.aug.flip_prob);
    cfg.train.aug.scale_jitter = kv.number("train.aug.scale_jitter", cfg.train.aug.scale_jitter);
    cfg.train.cluster_projection_dim =
        static_cast<int>(kv.integer("train.cluster_projection_dim", 0));

    if (kv.has("net.hidden")) {
        cfg.train.net.hidden_widths.clear();
        for (const std::string& part : split(kv.require("net.hidden"), ',')) {
            try {
                cfg.train.net.hidden_widths.push_back(static_cast<int>(parse_long(part, "net.hidden")));
            } catch (const ValidationError& e) {
                throw ConfigError("net.hidden", e.what());
            }
        }
    }
    cfg.train.net.H = static_cast<int>(kv.integer("net.h", cfg.train.net.H));
    cfg.train.net.D0 = static_cast<int>(kv.integer("net.d0", cfg.train.net.D0));
    cfg.train.net.M = static_cast<int>(kv.integer("net.m", cfg.train.net.M));
    cfg.train.net.D1 = static_cast<int>(kv.integer("net.d1", cfg.train.net.D1));
    cfg.train.net.disc_hidden = static_cast<int>(kv.integer("net.disc_hidden", cfg.train.net.disc_hidden));

    const std::string mode = kv.get("eval.mode", "auto");
    if (mode == "auto") cfg.train.eval_mode = EvalModeChoice::Auto;
    else if (mode == "closed") cfg.train.eval_mode = EvalModeChoice::Closed;
    else if (mode == "open_nclass") cfg.train.eval_mode = EvalModeChoice::OpenNClass;
    else if (mode == "open_reject") cfg.train.eval_mode = EvalModeChoice::OpenReject;
    else throw ConfigError("eval.mode", "eval.mode must be auto|closed|open_nclass|open_reject");
    cfg.train.reject_threshold = kv.number("eval.threshold", cfg.train.reject_threshold);
    cfg.report_os_macro = kv.flag("eval.report_os_macro", true);

    for (const std::string& part : split(kv.require("seeds"), ',')) {
        try {
            cfg.seeds.push_back(static_cast<std::uint64_t>(parse_long(part, "seeds")));
        } catch (const ValidationError& e) {
            throw ConfigError("seeds", e.what());
        }
    }
    cfg.out_dir = kv.get("out_dir", cfg.out_dir);

    try {
        cfg.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const ValidationError& e) {
        throw ConfigError("config", e.what());
    }
    return cfg;
}

ExperimentConfig load_experiment_config(const std::string& path) {
    std::string text;
    try {
        text = read_text_file(path);
    } catch (const ValidationError& e) {
        throw ConfigError("config", e.what());
    }
    return parse_experiment_config(text);
}

SeedResult run_seed(const ExperimentConfig& cfg, std::uint64_t seed, const std::string& dir) {
    const OpenSetTask task = make_open_set_task(cfg.task, seed);
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    auto [state, metrics] = train(task, tc);
    write_seed_artifacts(task, state, metrics, dir);
    return SeedResult{seed, metrics};
}

std::string run_experiment(const ExperimentConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);

    std::vector<SeedResult> results;
    for (std::uint64_t seed : cfg.seeds) {
        results.push_back(run_seed(cfg, seed, cfg.out_dir + "/seed_" + std::to_string(seed)));
    }

    std::ostringstream summary;
    summary << "metric,median,min,max\n";
    for (const auto& [name, vals] : metric_columns(results, cfg.report_os_macro)) {
        if (vals.empty()) continue;
        summary << name << ',' << fmt17(median(vals)) << ','
                << fmt17(*std::min_element(vals.begin(), vals.end())) << ','
                << fmt17(*std::max_element(vals.begin(), vals.end())) << '\n';
    }
    write_text_file(cfg.out_dir + "/summary.csv", summary.str());
    return cfg.out_dir;
}

std::string run_ablation(const ExperimentConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);

    const auto configs = ablation_configs(cfg.train);
    const auto dir_names = ablation_dir_names();

    std::ostringstream csv;
    csv << "config,knwn,mean,overall\n";
    for (size_t c = 0; c < configs.size(); ++c) {
        ExperimentConfig variant = cfg;
        variant.train = configs[c].second;
        std::vector<SeedResult> results;
        for (std::uint64_t seed : cfg.seeds) {
            const std::string dir =
                cfg.out_dir + "/" + dir_names[c] + "/seed_" + std::to_string(seed);
            results.push_back(run_seed(variant, seed, dir));
        }
        std::vector<double> knwn, mean, overall;
        for (const SeedResult& r : results) {
            knwn.push_back(r.metrics.knwn);
            mean.push_back(r.metrics.mean);
            overall.push_back(r.metrics.overall);
        }
        csv << configs[c].first << ',' << fmt17(median(knwn)) << ',' << fmt17(median(mean)) << ','
            << fmt17(median(overall)) << '\n';
    }
    write_text_file(cfg.out_dir + "/ablation.csv", csv.str());
    return cfg.out_dir;
}

void render_plots(const std::string& history_csv_path, const std::string& projection_csv_path,
                  const std::string& out_dir) {
    std::string history_text, projection_text;
    try {
        history_text = read_text_file(history_csv_path);
        projection_text = read_text_file(projection_csv_path);
    } catch (const ValidationError& e) {
        throw ConfigError("plot", e.what());
    }

    std::istringstream hin(history_text);
    std::string line;
    if (!std::getline(hin, line)) throw ConfigError("plot", "history csv is empty");
    const auto header = split(line, ',');
    if (header.size() < 2 || header[0] != "step") {
        throw ConfigError("plot", "history csv must start with a step column");
    }
    std::vector<CurveSeries> series(header.size() - 1);
    for (size_t c = 1; c < header.size(); ++c) series[c - 1].name = header[c];
    while (std::getline(hin, line)) {
        if (line.empty()) continue;
        const auto parts = split(line, ',');
        if (parts.size() != header.size()) throw ConfigError("plot", "history csv has a ragged row");
        double step = 0.0;
        try {
            step = parse_double(parts[0], "step");
            for (size_t c = 1; c < parts.size(); ++c) {
                series[c - 1].x.push_back(step);
                series[c - 1].y.push_back(parse_double(parts[c], header[c]));
            }
        } catch (const ValidationError& e) {
            throw ConfigError("plot", e.what());
        }
    }

    std::istringstream pin(projection_text);
    if (!std::getline(pin, line) || line != "id,true_label,pred_label,px,py") {
        throw ConfigError("plot", "projection csv must start with id,true_label,pred_label,px,py");
    }
    std::vector<ScatterPoint> points;
    while (std::getline(pin, line)) {
        if (line.empty()) continue;
        const auto parts = split(line, ',');
        if (parts.size() != 5) throw ConfigError("plot", "projection csv has a ragged row");
        try {
            const int label = static_cast<int>(parse_long(parts[1], "true_label"));
            points.push_back(ScatterPoint{parse_double(parts[3], "px"), parse_double(parts[4], "py"),
                                          label < 0 ? 0 : label, label < 0});
        } catch (const ValidationError& e) {
            throw ConfigError("plot", e.what());
        }
    }

    fs::create_directories(out_dir);
    write_text_file(out_dir + "/loss_curves.svg", render_loss_curves(series));
    write_text_file(out_dir + "/projection.svg", render_scatter(points));
}

} // namespace secc
