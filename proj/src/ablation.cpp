#include "hlps/ablation.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace hlps::ablation {

namespace fs = std::filesystem;

AblationSpec builtin_spec(const std::string& name, const cfg::Config& base) {
    AblationSpec s;
    s.name = name;
    s.base = base;
    if (name == "fig8") {
        s.variants = {{"hlps", {}, ""},
                      {"hlps-bl-a", {{"representation.variant", "random_projection"}}, "hlps"},
                      {"hlps-bl-b", {{"objective.loss", "hinge"}}, "hlps"}};
    } else if (name == "noise") {
        for (const char* sigma : {"0", "0.1", "0.15"}) {
            const std::string tag = std::string("sigma") + sigma;
            s.variants.push_back({"hlps-" + tag, {{"env.noise_sigma", sigma}}, ""});
            s.variants.push_back({"random_projection-" + tag,
                                  {{"env.noise_sigma", sigma}, {"representation.variant", "random_projection"}},
                                  "hlps-" + tag});
        }
    } else if (name == "window") {
        s.variants = {{"hlps-T3", {{"train.T", "3"}}, ""},
                      {"hlps-T1", {{"train.T", "1"}}, "hlps-T3"},
                      {"hlps-T5", {{"train.T", "5"}}, "hlps-T3"}};
    } else {
        throw std::invalid_argument("unknown ablation '" + name + "' (expected fig8, noise or window)");
    }
    return s;
}

cfg::Config variant_config(const cfg::Config& base, const Variant& v) {
    cfg::Config c = base;
    for (const auto& [k, val] : v.overrides) c.set(k, val, "variant " + v.id);
    return c;
}

std::vector<std::string> config_diff(const cfg::Config& a, const cfg::Config& b) {
    const cfg::Config ra = train::TrainConfig::from_config(a).to_config();
    const cfg::Config rb = train::TrainConfig::from_config(b).to_config();
    std::set<std::string> keys;
    for (const auto& k : ra.keys()) keys.insert(k);
    for (const auto& k : rb.keys()) keys.insert(k);
    std::vector<std::string> out;
    for (const auto& k : keys)
        if (!ra.has(k) || !rb.has(k) || ra.get_string(k, "") != rb.get_string(k, "")) out.push_back(k);
    return out;
}

void check_declared(const cfg::Config& base, const Variant& v) {
    std::set<std::string> declared;
    for (const auto& kv : v.overrides) declared.insert(kv.first);
    for (const auto& k : config_diff(base, variant_config(base, v)))
        if (!declared.count(k)) throw std::logic_error("variant " + v.id + " changes undeclared key " + k);
}

double t_critical_95(int df) {
    static const double table[] = {12.706, 4.303, 3.182, 2.776, 2.571, 2.447, 2.365, 2.306, 2.262, 2.228,
                                   2.201,  2.179, 2.160, 2.145, 2.131, 2.120, 2.110, 2.101, 2.093, 2.086,
                                   2.080,  2.074, 2.069, 2.064, 2.060, 2.056, 2.052, 2.048, 2.045, 2.042};
    if (df < 1) return std::nan("");
    if (df <= 30) return table[df - 1];
    if (df < 40) return 2.042;
    if (df < 60) return 2.021;
    if (df < 120) return 2.000;
    return 1.980;
}

Summary summarize(const std::vector<double>& xs) {
    Summary s;
    s.n = static_cast<int>(xs.size());
    if (xs.empty()) return s;
    double sum = 0.0;
    for (double x : xs) sum += x;
    s.mean = sum / s.n;
    if (s.n > 1) {
        double ss = 0.0;
        for (double x : xs) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / (s.n - 1));
        s.ci95 = t_critical_95(s.n - 1) * s.std / std::sqrt(static_cast<double>(s.n));
    }
    return s;
}

const Cell* Result::find(const std::string& variant, std::uint64_t seed) const {
    for (const auto& c : cells)
        if (c.variant == variant && c.seed == seed) return &c;
    return nullptr;
}

std::vector<double> Result::finals(const std::string& variant) const {
    std::vector<double> out;
    for (auto s : seeds)
        if (const Cell* c = find(variant, s); c && c->ok) out.push_back(c->final_success);
    return out;
}

std::vector<double> Result::paired_deltas(const std::string& a, const std::string& b) const {
    std::vector<double> out;
    for (auto s : seeds) {
        const Cell* ca = find(a, s);
        const Cell* cb = find(b, s);
        if (ca && cb && ca->ok && cb->ok) out.push_back(ca->final_success - cb->final_success);
    }
    return out;
}

bool Result::any_failed() const {
    return std::any_of(cells.begin(), cells.end(), [](const Cell& c) { return !c.ok; });
}

namespace {

nlohmann::json spec_json(const AblationSpec& spec) {
    nlohmann::json j;
    j["name"] = spec.name;
    j["seeds"] = spec.seeds;
    j["steps"] = spec.steps;
    for (const auto& v : spec.variants) {
        nlohmann::json jv;
        jv["id"] = v.id;
        jv["partner"] = v.partner;
        jv["overrides"] = nlohmann::json::object();
        for (const auto& [k, val] : v.overrides) jv["overrides"][k] = val;
        j["variants"].push_back(jv);
    }
    return j;
}

Cell cell_from_dir(const std::string& variant, std::uint64_t seed, const fs::path& dir) {
    Cell c;
    c.variant = variant;
    c.seed = seed;
    std::ifstream in(dir / "summary.json");
    if (!in) {
        c.error = "missing " + (dir / "summary.json").string();
        return c;
    }
    const nlohmann::json j = nlohmann::json::parse(in);
    c.ok = j.at("ok").get<bool>();
    c.error = j.at("error").get<std::string>();
    c.metrics = run::read_metrics(dir / "metrics.csv");
    c.final_success = c.metrics.empty() ? 0.0 : c.metrics.back().success_rate;
    return c;
}

}  // namespace

Result run_ablation(const AblationSpec& spec, const fs::path& out, int jobs) {
    if (spec.seeds.empty()) throw std::invalid_argument("ablation: no seeds");
    std::vector<train::TrainConfig> configs;
    for (const auto& v : spec.variants) {
        check_declared(spec.base, v);
        configs.push_back(train::TrainConfig::from_config(variant_config(spec.base, v)));
    }
    fs::create_directories(out);
    {
        std::ofstream f(out / "spec.json");
        f << spec_json(spec).dump(2) << "\n";
    }

    struct Job {
        size_t variant;
        std::uint64_t seed;
    };
    std::vector<Job> work;
    for (size_t v = 0; v < spec.variants.size(); ++v)
        for (auto s : spec.seeds) work.push_back({v, s});

    run::RunOptions opt;
    opt.steps = spec.steps;
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i = next++; i < work.size(); i = next++) {
            const auto& v = spec.variants[work[i].variant];
            run::run_training(configs[work[i].variant], work[i].seed,
                              out / v.id / ("seed_" + std::to_string(work[i].seed)), opt);
        }
    };
    const int n = std::max(1, std::min<int>(jobs, static_cast<int>(work.size())));
    std::vector<std::thread> pool;
    for (int i = 1; i < n; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    Result r = load_result(out);
    write_tables(r, out);
    return r;
}

Result load_result(const fs::path& out) {
    std::ifstream in(out / "spec.json");
    if (!in) throw std::runtime_error("no spec.json in '" + out.string() + "'");
    const nlohmann::json j = nlohmann::json::parse(in);
    Result r;
    r.name = j.at("name").get<std::string>();
    r.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    for (const auto& jv : j.at("variants")) {
        Variant v;
        v.id = jv.at("id").get<std::string>();
        v.partner = jv.at("partner").get<std::string>();
        for (const auto& [k, val] : jv.at("overrides").items()) v.overrides.emplace_back(k, val.get<std::string>());
        r.variants.push_back(v);
    }
    for (const auto& v : r.variants)
        for (auto s : r.seeds) r.cells.push_back(cell_from_dir(v.id, s, out / v.id / ("seed_" + std::to_string(s))));
    return r;
}

std::string render_markdown(const Result& r) {
    std::ostringstream md;
    char buf[256];
    md << "# Ablation: " << r.name << "\n\n";
    md << "Final evaluation success rate per variant (mean ± std, 95% CI half-width, Student t).\n\n";
    md << "| variant | n | failed | mean | std | ci95 | vs | paired delta | delta ci95 |\n";
    md << "|---|---|---|---|---|---|---|---|---|\n";
    for (const auto& v : r.variants) {
        const Summary s = summarize(r.finals(v.id));
        const int failed = static_cast<int>(r.seeds.size()) - s.n;
        std::snprintf(buf, sizeof buf, "| %s | %d | %d | %.3f | %.3f | %.3f |", v.id.c_str(), s.n, failed, s.mean,
                      s.std, s.ci95);
        md << buf;
        if (v.partner.empty()) {
            md << " | | |\n";
        } else {
            const Summary d = summarize(r.paired_deltas(v.id, v.partner));
            std::snprintf(buf, sizeof buf, " %s | %+.3f | %.3f |\n", v.partner.c_str(), d.mean, d.ci95);
            md << buf;
        }
    }
    bool header = false;
    for (const auto& c : r.cells) {
        if (c.ok) continue;
        if (!header) md << "\nFailed runs:\n\n";
        header = true;
        md << "- " << c.variant << " seed " << c.seed << ": " << c.error << "\n";
    }
    return md.str();
}

std::string render_csv(const Result& r) {
    std::ostringstream csv;
    csv << "variant,seed,ok,final_success\n";
    for (const auto& c : r.cells)
        csv << c.variant << "," << c.seed << "," << (c.ok ? 1 : 0) << "," << cfg::format_double(c.final_success)
            << "\n";
    return csv.str();
}

void write_tables(const Result& r, const fs::path& out) {
    std::ofstream(out / "table.md") << render_markdown(r);
    std::ofstream(out / "table.csv") << render_csv(r);
}

}  // namespace hlps::ablation
