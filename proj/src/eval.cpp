#include "offbench/eval.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "offbench/errors.hpp"

namespace offbench::eval {

EvalResult evaluate(const Policy& policy, env::EnvId env_id, int episodes, std::uint64_t seed)
{
    if (episodes < 1) throw ContractViolation("evaluate: episodes must be >= 1");
    EvalResult res;
    res.returns.reserve(static_cast<std::size_t>(episodes));
    for (int e = 0; e < episodes; ++e) {
        Rng rng = make_rng(seed, static_cast<std::uint64_t>(e));
        env::EnvState state = env::env_reset(env_id, rng);
        double total = 0.0;
        bool done = false;
        while (!done) {
            const Vec a = policy(env::observe(state)).cwiseMax(-1.0).cwiseMin(1.0);
            const auto step = env::env_step(state, a);
            total += step.reward;
            state = step.next;
            done = step.done;
        }
        res.returns.push_back(total);
    }
    res.mean = std::accumulate(res.returns.begin(), res.returns.end(), 0.0) / episodes;
    return res;
}

EvalSeries::EvalSeries(int window) : window_(window)
{
    if (window < 1) throw ConfigError("running_window", "must be >= 1");
}

void EvalSeries::add(long step, std::vector<double> returns)
{
    if (returns.empty()) throw ContractViolation("EvalSeries: evaluation point without returns");
    if (!points_.empty() && step <= points_.back().step)
        throw ContractViolation("EvalSeries: steps must be strictly increasing");
    Point p;
    p.step = step;
    p.mean = std::accumulate(returns.begin(), returns.end(), 0.0) / static_cast<double>(returns.size());
    p.returns = std::move(returns);
    points_.push_back(std::move(p));
}

std::vector<double> EvalSeries::means() const
{
    std::vector<double> out;
    out.reserve(points_.size());
    for (const auto& p : points_) out.push_back(p.mean);
    return out;
}

std::vector<double> running_average(const std::vector<double>& values, int window)
{
    if (window < 1) throw ContractViolation("running_average: window must be >= 1");
    if (values.empty()) throw ContractViolation("running_average: empty series");
    std::vector<double> out(values.size());
    const auto L = static_cast<std::size_t>(window);
    for (std::size_t t = 0; t < values.size(); ++t) {
        const std::size_t lo = t + 1 >= L ? t + 1 - L : 0;
        double sum = 0.0;
        for (std::size_t i = lo; i <= t; ++i) sum += values[i];
        out[t] = sum / static_cast<double>(t + 1 - lo);
    }
    return out;
}

Summary summarize(const std::vector<double>& means, int window)
{
    if (means.empty()) throw ContractViolation("summarize: empty series");
    Summary s;
    s.last_avg = means.back();
    s.best_avg = *std::max_element(means.begin(), means.end());
    s.last_running_avg = running_average(means, window).back();
    return s;
}

Summary summarize(const EvalSeries& series)
{
    return summarize(series.means(), series.window());
}

double normalized_score(double raw, double random_ref, double expert_ref)
{
    if (!(expert_ref > random_ref)) throw ContractViolation("normalized_score: expert_ref must exceed random_ref");
    return 100.0 * (raw - random_ref) / (expert_ref - random_ref);
}

namespace {

std::string fmt17(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

} // namespace

void write_eval_csv(const std::filesystem::path& path, const EvalSeries& series)
{
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write " + path.string());
    os << "step,mean_return,episode_returns\n";
    for (const auto& p : series.points()) {
        std::string blob = "[";
        for (std::size_t i = 0; i < p.returns.size(); ++i) blob += (i ? "," : "") + fmt17(p.returns[i]);
        blob += "]";
        os << p.step << ',' << fmt17(p.mean) << ",\"" << blob << "\"\n";
    }
}

EvalSeries read_eval_csv(const std::filesystem::path& path, int window)
{
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot read " + path.string());
    EvalSeries series(window);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (lineno == 1 || line.empty()) continue;
        const auto c1 = line.find(',');
        const auto q1 = line.find('"');
        const auto q2 = line.rfind('"');
        if (c1 == std::string::npos || q1 == std::string::npos || q2 <= q1) throw ParseError(lineno, "bad eval row");
        try {
            const long step = std::stol(line.substr(0, c1));
            auto returns = nlohmann::json::parse(line.substr(q1 + 1, q2 - q1 - 1)).get<std::vector<double>>();
            series.add(step, std::move(returns));
        } catch (const std::exception& e) {
            throw ParseError(lineno, e.what());
        }
    }
    return series;
}

} // namespace offbench::eval
