#include "alac/config.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace alac;

namespace {

std::string write_temp(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path.string();
}

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Config, EmptyFileGivesDefaults) {
  const std::string path = write_temp("alac_empty.cfg", "");
  const RunConfig c = parse_config(path, {});
  EXPECT_EQ(c.train.gamma, 0.995);
  EXPECT_EQ(c.train.batch_size, 256);
  EXPECT_EQ(c.train.buffer_capacity, 1000000u);
  EXPECT_EQ(c.train.lr_actor, 1e-4);
  EXPECT_EQ(c.train.lr_lyapunov, 3e-4);
  EXPECT_EQ(c.train.lr_multipliers, 3e-4);
  EXPECT_EQ(c.train.polyak, 0.005);
  EXPECT_EQ(c.train.mode, CertificationMode::Asc);
  EXPECT_EQ(c.train.lambda_l_init, 1.0);
  EXPECT_EQ(c.train.lambda_e_init, 1.0);
  EXPECT_EQ(c.env, "lintrack");
  EXPECT_EQ(c.resolved_total_steps(), 20000);
  EXPECT_EQ(c.resolved_train().resolved_entropy_target(1), -1.0);
}

TEST(Config, GammaOutOfRangeRejected) {
  const std::string msg = error_of([] { parse_config(std::nullopt, {"gamma=1.5"}); });
  EXPECT_NE(msg.find("train.gamma"), std::string::npos) << msg;
  EXPECT_THROW(parse_config(std::nullopt, {"train.gamma=0"}), ConfigError);
}

TEST(Config, CommandLineBeatsFile) {
  const std::string path = write_temp("alac_prec.cfg", "[train]\nlr_actor = 2e-4\nbatch_size = 64\n");
  const RunConfig c = parse_config(path, {"train.lr_actor=3e-4"});
  EXPECT_EQ(c.train.lr_actor, 3e-4);
  EXPECT_EQ(c.train.batch_size, 64);
  EXPECT_EQ(parse_config(path, {}).train.lr_actor, 2e-4);
}

TEST(Config, UnknownKeysAndSectionsRejected) {
  EXPECT_NE(error_of([] { parse_config(std::nullopt, {"train.learning_rate=1"}); }).find("learning_rate"),
            std::string::npos);
  std::istringstream in("[bogus]\nx = 1\n");
  RunConfig c;
  EXPECT_THROW(apply_config_text(c, in), ConfigError);
  EXPECT_THROW(parse_config(std::nullopt, {"no_equals_sign"}), ConfigError);
}

TEST(Config, TypeMismatchNamesKey) {
  const std::string msg = error_of([] { parse_config(std::nullopt, {"batch_size=abc"}); });
  EXPECT_NE(msg.find("train.batch_size"), std::string::npos) << msg;
  EXPECT_THROW(parse_config(std::nullopt, {"batch_size=2.5"}), ConfigError);
  EXPECT_THROW(parse_config(std::nullopt, {"mode=ppo"}), ConfigError);
  EXPECT_THROW(parse_config(std::nullopt, {"lr_actor=-1"}), ConfigError);
}

TEST(Config, SectionedFileWithComments) {
  const std::string path = write_temp("alac_full.cfg",
                                      "# run block\n"
                                      "[run]\n"
                                      "env = cartpole-cost   # inline comment\n"
                                      "seed = 7\n"
                                      "[train]\n"
                                      "actor_hidden = 32, 32\n"
                                      "critic_layers = 32 32 8\n"
                                      "mode = fixed-k\n"
                                      "entropy_target = auto\n"
                                      "total_steps = 500\n"
                                      "[env]\n"
                                      "pole_mass = 0.2\n"
                                      "[robustness]\n"
                                      "magnitudes = 0, 1.5, 3\n");
  const RunConfig c = parse_config(path, {});
  EXPECT_EQ(c.env, "cartpole-cost");
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.train.actor_hidden, (std::vector<int>{32, 32}));
  EXPECT_EQ(c.train.critic_layers, (std::vector<int>{32, 32, 8}));
  EXPECT_EQ(c.train.mode, CertificationMode::FixedK);
  EXPECT_TRUE(std::isnan(c.train.entropy_target));
  EXPECT_EQ(c.resolved_total_steps(), 500);
  EXPECT_EQ(c.env_params.at("pole_mass"), 0.2);
  EXPECT_EQ(c.robustness.magnitudes, (std::vector<double>{0.0, 1.5, 3.0}));
}

TEST(Config, EnvParametersChecked) {
  EXPECT_THROW(parse_config(std::nullopt, {"env.pole_mass=0.2"}), ContractError);
  EXPECT_NO_THROW(parse_config(std::nullopt, {"run.env=cartpole-cost", "env.pole_mass=0.2"}));
  EXPECT_THROW(parse_config(std::nullopt, {"env=mujoco"}), ContractError);
}

TEST(Config, BareKeysResolve) {
  const RunConfig c = parse_config(std::nullopt, {"seed=3", "eval.trials=5", "reps=100", "batch_size=8"});
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.eval.trials, 5);
  EXPECT_EQ(c.verify.reps, 100);
  EXPECT_EQ(c.train.batch_size, 8);
  const std::string msg = error_of([] { parse_config(std::nullopt, {"trials=5"}); });
  EXPECT_NE(msg.find("ambiguous"), std::string::npos) << msg;
}

TEST(Config, VerifyCrossChecks) {
  EXPECT_THROW(parse_config(std::nullopt, {"verify.gamma=0.5", "verify.lambda=0.6"}), ContractError);
  const RunConfig c = parse_config(std::nullopt, {"verify.horizons=5 50", "track_profile=sinusoid"});
  EXPECT_EQ(c.verify.horizons, (std::vector<int>{5, 50}));
  EXPECT_EQ(c.verify.track_profile, ReferenceProfile::Sinusoid);
}

TEST(Config, RenderParsesBack) {
  const RunConfig a = parse_config(std::nullopt, {"run.env=point-circle-cost", "env.radius=2", "lr_actor=7e-5",
                                                  "critic_activation=tanh", "seed=11", "total_steps=1234"});
  const std::string text = render_config(a);
  std::istringstream in(text);
  RunConfig b;
  apply_config_text(b, in);
  EXPECT_EQ(config_entries(a), config_entries(b));
  EXPECT_EQ(b.train.critic_activation, Activation::Tanh);
  EXPECT_EQ(b.env_params.at("radius"), 2.0);
}

TEST(Config, MissingFileIsConfigError) {
  EXPECT_THROW(parse_config(std::string("/nonexistent/run.cfg"), {}), ConfigError);
}
