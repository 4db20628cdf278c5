// Measures the random and expert reference scores of an environment.
#include <cstdio>
#include <memory>

#include <CLI11.hpp>

#include "offbench/datagen.hpp"
#include "offbench/eval.hpp"

using namespace offbench;
using eval::Vec;

int main(int argc, char** argv)
{
    CLI::App app{"offbench-refs"};
    std::string env_name = "pointmass1d";
    long steps = 100000;
    std::uint64_t seed = 0;
    int episodes = 100;
    std::string out_dir;
    app.add_option("--env", env_name);
    app.add_option("--steps", steps);
    app.add_option("--seed", seed);
    app.add_option("--episodes", episodes);
    app.add_option("--save", out_dir, "keep the online run in this directory");
    CLI11_PARSE(app, argc, argv);

    const auto id = env::parse_env_id(env_name);
    auto rng = std::make_shared<Rng>(make_rng(seed, 5));
    const auto random = eval::evaluate(
        [rng](const Vec&) { return uniform(*rng, 1, 1, -1.0, 1.0).col(0).eval(); }, id, episodes, seed);
    gen::OnlineOptions opt;
    opt.medium_threshold = 1e300;
    const auto run = gen::collect_online(id, gen::online_sac_config(seed), steps, seed, opt);
    const auto& expert = *run.expert;
    const auto ex = eval::evaluate([&](const Vec& o) { return expert.act(o); }, id, episodes, seed);
    for (const auto& [s, m] : run.evaluations) std::printf("step %ld mean %.3f\n", s, m);
    std::printf("random %.6f\nexpert %.6f\n", random.mean, ex.mean);
    if (!out_dir.empty()) gen::save_online_run(out_dir, run);
    return 0;
}
