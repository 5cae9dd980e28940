#include "hlps/runner.hpp"

#include <nlohmann/json.hpp>

#include <atomic>
#include <charconv>
#include <chrono>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <thread>

namespace hlps::run {

namespace fs = std::filesystem;

namespace {

void write_file(const fs::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + p.string() + "'");
    out << text;
}

double parse_field(const std::string& s, const fs::path& csv, int line) {
    double v = 0.0;
    auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size())
        throw std::runtime_error(csv.string() + ":" + std::to_string(line) + ": bad number '" + s + "'");
    return v;
}

}  // namespace

std::string manifest_text(const train::TrainConfig& cfg, std::uint64_t seed, const RunOptions& opt) {
    train::TrainConfig resolved = cfg;
    resolved.seed = seed;
    if (opt.steps >= 0) resolved.total_steps = opt.steps;
    cfg::Config c = resolved.to_config();
    c.set("run.artifact_version", kArtifactVersion);
    c.set("run.layout", "manifest.toml metrics.csv timing.csv ckpt_<step>.hlps final.hlps summary.json");
    if (opt.transfer_from) c.set("run.transfer_from", opt.transfer_from->string());
    return "# Resolved run configuration. Pass it back with --config to reproduce this run.\n" + c.to_toml();
}

RunOutcome run_training(const train::TrainConfig& cfg, std::uint64_t seed, const fs::path& dir,
                        const RunOptions& opt) {
    const auto t0 = std::chrono::steady_clock::now();
    auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

    RunOutcome out;
    out.seed = seed;
    out.dir = dir;
    fs::create_directories(dir);
    write_file(dir / "manifest.toml", manifest_text(cfg, seed, opt));
    const long steps = opt.steps >= 0 ? opt.steps : cfg.total_steps;

    std::optional<train::Trainer> trainer;
    try {
        trainer.emplace(cfg, seed);
        if (opt.transfer_from) {
            const train::Trainer source = train::Trainer::load(ckpt::Archive::load(opt.transfer_from->string()));
            trainer->transfer_from(source);
        }

        std::ofstream metrics(dir / "metrics.csv");
        std::ofstream timing(dir / "timing.csv");
        if (!metrics || !timing) throw std::runtime_error("cannot write metrics in '" + dir.string() + "'");
        metrics << train::metrics_header() << "\n" << std::flush;
        timing << "step,seconds\n" << std::flush;
        auto on_eval = [&](const train::MetricsRow& row) {
            metrics << train::format_metrics(row) << "\n" << std::flush;
            timing << row.step << "," << cfg::format_double(elapsed()) << "\n" << std::flush;
            if (!opt.quiet) {
                std::ostringstream msg;
                msg << "[seed " << seed << "] step " << row.step << " success " << row.success_rate << "\n";
                std::fputs(msg.str().c_str(), stderr);
            }
        };

        const long every = cfg.checkpoint_every;
        while (trainer->step() < steps) {
            long chunk = steps - trainer->step();
            if (every > 0) chunk = std::min(chunk, every - trainer->step() % every);
            trainer->run(chunk, on_eval);
            if (every > 0 && trainer->step() % every == 0 && trainer->step() < steps)
                trainer->save().save((dir / ("ckpt_" + std::to_string(trainer->step()) + ".hlps")).string());
        }
        trainer->save().save((dir / "final.hlps").string());
        out.ok = true;
    } catch (const std::exception& e) {
        out.error = e.what();
        if (trainer) {
            try {
                trainer->save().save((dir / "diagnostic.hlps").string());
            } catch (const std::exception&) {
            }
        }
    }
    if (trainer) {
        out.steps = trainer->step();
        out.metrics = trainer->metrics();
    }
    out.seconds = elapsed();

    nlohmann::json j;
    j["seed"] = seed;
    j["ok"] = out.ok;
    j["error"] = out.error;
    j["steps"] = out.steps;
    j["evaluations"] = out.metrics.size();
    j["final_success_rate"] = out.metrics.empty() ? 0.0 : out.metrics.back().success_rate;
    j["seconds"] = out.seconds;
    if (trainer) {
        const auto& c = trainer->counters();
        j["updates"] = {{"low", c.low_updates}, {"high", c.high_updates}, {"encoder", c.encoder_updates},
                        {"hyper", c.hyper_updates}};
    }
    write_file(dir / "summary.json", j.dump(2) + "\n");
    return out;
}

std::vector<RunOutcome> run_seeds(const train::TrainConfig& cfg, const std::vector<std::uint64_t>& seeds,
                                  const fs::path& dir, const RunOptions& opt, int jobs) {
    std::vector<RunOutcome> out(seeds.size());
    std::atomic<size_t> next{0};
    auto worker = [&] {
        for (size_t i = next++; i < seeds.size(); i = next++)
            out[i] = run_training(cfg, seeds[i], dir / ("seed_" + std::to_string(seeds[i])), opt);
    };
    const int n = std::max(1, std::min<int>(jobs, static_cast<int>(seeds.size())));
    std::vector<std::thread> pool;
    for (int i = 1; i < n; ++i) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
    return out;
}

std::vector<train::MetricsRow> read_metrics(const fs::path& csv) {
    std::ifstream in(csv);
    if (!in) throw std::runtime_error("cannot open '" + csv.string() + "'");
    std::string line;
    if (!std::getline(in, line) || line != train::metrics_header())
        throw std::runtime_error(csv.string() + ": unexpected header");
    std::vector<train::MetricsRow> rows;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        std::string item;
        while (std::getline(ss, item, ',')) f.push_back(item);
        if (f.size() != 7) throw std::runtime_error(csv.string() + ":" + std::to_string(lineno) + ": expected 7 fields");
        train::MetricsRow r;
        r.step = static_cast<long>(parse_field(f[0], csv, lineno));
        r.success_rate = parse_field(f[1], csv, lineno);
        r.mean_return = parse_field(f[2], csv, lineno);
        r.rep_loss = parse_field(f[3], csv, lineno);
        r.gamma2 = parse_field(f[4], csv, lineno);
        r.ell = parse_field(f[5], csv, lineno);
        r.sigma2 = parse_field(f[6], csv, lineno);
        rows.push_back(r);
    }
    return rows;
}

void write_metrics(const fs::path& csv, const std::vector<train::MetricsRow>& rows) {
    std::ostringstream s;
    s << train::metrics_header() << "\n";
    for (const auto& r : rows) s << train::format_metrics(r) << "\n";
    write_file(csv, s.str());
}

std::vector<std::uint64_t> parse_seed_range(const std::string& text) {
    auto num = [&](const std::string& s) {
        std::uint64_t v = 0;
        auto r = std::from_chars(s.data(), s.data() + s.size(), v);
        if (s.empty() || r.ec != std::errc() || r.ptr != s.data() + s.size())
            throw std::invalid_argument("bad seed '" + s + "' in '" + text + "'");
        return v;
    };
    const auto dots = text.find("..");
    if (dots == std::string::npos) return {num(text)};
    const std::uint64_t a = num(text.substr(0, dots)), b = num(text.substr(dots + 2));
    if (b < a) throw std::invalid_argument("empty seed range '" + text + "'");
    if (b - a > 10000) throw std::invalid_argument("seed range too large '" + text + "'");
    std::vector<std::uint64_t> out;
    for (std::uint64_t s = a; s <= b; ++s) out.push_back(s);
    return out;
}

std::optional<long> steps_to_threshold(const std::vector<train::MetricsRow>& rows, double threshold) {
    for (const auto& r : rows)
        if (r.success_rate >= threshold) return r.step;
    return std::nullopt;
}

}  // namespace hlps::run
