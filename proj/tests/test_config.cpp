#include <doctest.h>

#include "hlps/config.hpp"
#include "hlps/trainer.hpp"

#include <filesystem>
#include <limits>
#include <string>

using namespace hlps;
using cfg::Config;
using cfg::ConfigError;

TEST_CASE("parse sections, values and comments") {
    const auto c = Config::parse(
        "# top\n[train]\nk = 50   # trailing\nlr = 1e-4\nname = \"a # b\"\nflag = true\n\n[env]\ngoal = [1.5, -2]\nlayout = umaze\n");
    CHECK(c.get_int("train.k", 0) == 50);
    CHECK(c.get_double("train.lr", 0) == 1e-4);
    CHECK(c.get_string("train.name", "") == "a # b");
    CHECK(c.get_bool("train.flag", false));
    const auto g = c.get_vector("env.goal", {});
    REQUIRE(g.size() == 2);
    CHECK(g(1) == -2.0);
    CHECK(c.get_string("env.layout", "") == "umaze");
    CHECK(c.get_int("train.missing", 7) == 7);
}

TEST_CASE("integers accept integral exponent forms only") {
    const auto c = Config::parse("[a]\nx = 3e5\ny = 2.5\n");
    CHECK(c.get_int("a.x", 0) == 300000);
    CHECK_THROWS_AS(c.get_int("a.y", 0), ConfigError);
}

TEST_CASE("syntax errors name the line") {
    auto message = [](const std::string& text) {
        try {
            Config::parse(text, "f.toml");
        } catch (const ConfigError& e) {
            return std::string(e.what());
        }
        return std::string();
    };
    CHECK(message("[a\nx=1\n").find("f.toml:1") != std::string::npos);
    CHECK(message("[a]\nx 1\n").find("f.toml:2") != std::string::npos);
    CHECK(message("x = 1\n").find("outside any section") != std::string::npos);
    CHECK(message("[a]\nx = 1\nx = 2\n").find("duplicate") != std::string::npos);
    CHECK(message("[a]\nx = \"open\n").find("unterminated") != std::string::npos);
    CHECK(message("[a]\nx =\n").find("missing value") != std::string::npos);
}

TEST_CASE("type errors name the key and the value") {
    const auto c = Config::parse("[a]\nn = abc\nb = yes\nv = [1, x]\nw = 3\n", "f.toml");
    try {
        c.get_double("a.n", 0);
        FAIL("expected throw");
    } catch (const ConfigError& e) {
        const std::string m = e.what();
        CHECK(m.find("f.toml:2") != std::string::npos);
        CHECK(m.find("a.n") != std::string::npos);
        CHECK(m.find("abc") != std::string::npos);
    }
    CHECK_THROWS_AS(c.get_bool("a.b", false), ConfigError);
    CHECK_THROWS_AS(c.get_vector("a.v", {}), ConfigError);
    CHECK_THROWS_AS(c.get_vector("a.w", {}), ConfigError);
}

TEST_CASE("overrides replace or add keys") {
    auto c = Config::parse("[train]\nk = 50\n");
    c.apply_override("train.k=10");
    c.apply_override("env.layout = \"open\"");
    CHECK(c.get_int("train.k", 0) == 10);
    CHECK(c.get_string("env.layout", "") == "open");
    CHECK_THROWS_AS(c.apply_override("train.k"), ConfigError);
    CHECK_THROWS_AS(c.apply_override("nodot=1"), ConfigError);
}

TEST_CASE("unknown keys are rejected with their line") {
    const auto c = Config::parse("[train]\nk = 1\nkk = 2\n", "f.toml");
    try {
        c.reject_unknown({"train.k"});
        FAIL("expected throw");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("f.toml:3: unknown key 'train.kk'") != std::string::npos);
    }
}

TEST_CASE("canonical text round-trips") {
    const auto c = Config::parse("[b]\ny = \"two words\"\nx = [1, 2]\n[a]\nz = 0.1\nt = false\n");
    const std::string text = c.to_toml();
    CHECK(text.find("[a]") < text.find("[b]"));
    const auto d = Config::parse(text);
    CHECK(d.to_toml() == text);
    CHECK(d.get_string("b.y", "") == "two words");
}

TEST_CASE("shortest round-trip doubles") {
    CHECK(cfg::format_double(0.1) == "0.1");
    CHECK(cfg::format_double(1e-5) == "1e-05");
    CHECK(cfg::format_double(300000) == "300000");
    for (double v : {1.0 / 3.0, 2.0 / 7.0, 1e-300, -123.456, std::numeric_limits<double>::max()})
        CHECK(std::stod(cfg::format_double(v)) == v);
}

TEST_CASE("training configuration: defaults, round trip, validation") {
    const auto t = train::TrainConfig::from_config(Config::parse(""));
    CHECK(t.k == 50);
    CHECK(t.m == 100);
    CHECK(t.T == 3);
    CHECK(t.total_steps == 300000);
    CHECK(t.sac.hidden == 256);
    CHECK(t.sac.lr == doctest::Approx(2e-4));
    CHECK(t.sac.gamma == doctest::Approx(0.99));
    CHECK(t.sac.tau == doctest::Approx(0.005));
    CHECK(t.sac.reward_scale == doctest::Approx(0.1));
    CHECK(t.rep.latent_dim == 2);
    CHECK(t.rep.input_dims == env::kAgentStateDim);
    CHECK(train::TrainConfig::from_config(Config::parse("[representation]\ninput = \"observation\"\n")).rep.input_dims == 0);
    CHECK_THROWS_AS(train::TrainConfig::from_config(Config::parse("[representation]\ninput = \"goal\"\n")),
                    ConfigError);

    auto c = Config::parse("[train]\nk = 20\n[env]\nnoise_sigma = 0.15\nreward = \"dense\"\n");
    const auto u = train::TrainConfig::from_config(c);
    const auto back = train::TrainConfig::from_config(u.to_config());
    CHECK(back.to_config().to_toml() == u.to_config().to_toml());
    CHECK(back.k == 20);
    CHECK(back.env.noise_sigma == 0.15);
    CHECK(back.env.reward_mode == env::RewardMode::Dense);

    CHECK_THROWS_AS(train::TrainConfig::from_config(Config::parse("[train]\nbogus = 1\n")), ConfigError);
    CHECK_THROWS_AS(train::TrainConfig::from_config(Config::parse("[train]\nk = 0\n")), ConfigError);
    CHECK_THROWS_AS(train::TrainConfig::from_config(Config::parse("[train]\nsac_batch = 0\n")), ConfigError);
    CHECK_THROWS_AS(train::TrainConfig::from_config(Config::parse("[sac]\ngamma = 1\n")), ConfigError);
    CHECK_THROWS_AS(train::TrainConfig::from_config(Config::parse("[env]\nlayout = \"spiral\"\n")), ConfigError);
    CHECK_THROWS_AS(train::TrainConfig::from_config(Config::parse("[eval]\ngoal = [2, 6]\n")), ConfigError);
    CHECK_THROWS_AS(train::TrainConfig::from_config(Config::parse("[eval]\ngoal = [2]\n")), ConfigError);
    CHECK_THROWS_AS(train::TrainConfig::from_config(Config::parse("[representation]\nvariant = \"x\"\n")),
                    ConfigError);
    // manifest keys pass through
    CHECK_NOTHROW(train::TrainConfig::from_config(Config::parse("[run]\nartifact_version = \"x\"\n")));
}

TEST_CASE("every shipped configuration loads") {
    const std::filesystem::path dir = HLPS_SOURCE_DIR "/configs";
    int n = 0;
    for (const auto& entry : std::filesystem::directory_iterator(dir)) {
        if (entry.path().extension() != ".toml") continue;
        CAPTURE(entry.path().string());
        CHECK_NOTHROW(train::TrainConfig::from_config(Config::from_file(entry.path().string())));
        ++n;
    }
    CHECK(n >= 8);
    CHECK_THROWS_AS(Config::from_file("/nonexistent.toml"), ConfigError);
}
