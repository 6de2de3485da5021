#include "digfuse/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <string>

#include "digfuse/errors.hpp"

namespace digfuse {

int NoiseSchedule::check(int t) const {
    if (t < 1 || t > T) {
        throw ConfigError("timestep " + std::to_string(t) + " outside schedule range 1.." +
                          std::to_string(T));
    }
    return t - 1;
}

NoiseSchedule make_linear_schedule(int T, double beta_start, double beta_end) {
    if (T < 1) throw ConfigError("schedule T must be >= 1, got " + std::to_string(T));
    if (!(beta_start > 0.0 && beta_start < 1.0))
        throw ConfigError("beta_start must lie in (0,1), got " + std::to_string(beta_start));
    if (!(beta_end > 0.0 && beta_end < 1.0))
        throw ConfigError("beta_end must lie in (0,1), got " + std::to_string(beta_end));
    if (beta_end < beta_start) throw ConfigError("beta_end must be >= beta_start");

    NoiseSchedule s;
    s.T = T;
    s.beta.resize(T);
    s.alpha.resize(T);
    s.alpha_bar.resize(T);
    s.sigma.resize(T);
    s.source_steps.resize(T);
    double prod = 1.0;
    for (int i = 0; i < T; ++i) {
        double frac = (T == 1) ? 0.0 : static_cast<double>(i) / (T - 1);
        s.beta[i] = beta_start + frac * (beta_end - beta_start);
        s.alpha[i] = 1.0 - s.beta[i];
        prod *= s.alpha[i];
        s.alpha_bar[i] = prod;
        s.source_steps[i] = i + 1;
        if (i == 0) {
            s.sigma[i] = 0.0;  // final reverse step is deterministic
        } else {
            s.sigma[i] = std::sqrt((1.0 - s.alpha[i]) * (1.0 - s.alpha_bar[i - 1]) /
                                   (1.0 - s.alpha_bar[i]));
        }
    }
    return s;
}

NoiseSchedule sub_schedule(const NoiseSchedule& s, const std::vector<int>& steps) {
    if (steps.empty()) throw ConfigError("sub_schedule: empty step selection");
    if (steps.back() != s.T)
        throw ConfigError("sub_schedule: selection must end at T=" + std::to_string(s.T));
    int prev = 0;
    for (int t : steps) {
        if (t < 1 || t > s.T)
            throw ConfigError("sub_schedule: step " + std::to_string(t) + " out of range");
        if (t <= prev) throw ConfigError("sub_schedule: steps must be strictly increasing");
        prev = t;
    }

    NoiseSchedule r;
    r.T = static_cast<int>(steps.size());
    r.beta.resize(r.T);
    r.alpha.resize(r.T);
    r.alpha_bar.resize(r.T);
    r.sigma.resize(r.T);
    r.source_steps = steps;
    double prev_bar = 1.0;
    int prev_step = 0;
    for (int j = 0; j < r.T; ++j) {
        int t = steps[j];
        r.alpha_bar[j] = s.alpha_bar_at(t);
        if (t == prev_step + 1) {
            // Consecutive original steps: copy the originals verbatim so the
            // identity selection reproduces the input bit-for-bit.
            r.alpha[j] = s.alpha_at(t);
            r.beta[j] = s.beta_at(t);
        } else {
            r.alpha[j] = r.alpha_bar[j] / prev_bar;
            r.beta[j] = 1.0 - r.alpha[j];
        }
        r.sigma[j] = (j == 0) ? 0.0
                              : std::sqrt((1.0 - r.alpha[j]) * (1.0 - r.alpha_bar[j - 1]) /
                                          (1.0 - r.alpha_bar[j]));
        prev_bar = r.alpha_bar[j];
        prev_step = t;
    }
    return r;
}

std::vector<int> make_step_plan(int T, int N, StepSpacing spacing, double exponent) {
    if (N < 2 || N > T)
        throw ConfigError("step plan needs 2 <= N <= T, got N=" + std::to_string(N) +
                          " T=" + std::to_string(T));

    // Budget of T - N extra gap units apportioned over N gaps by largest
    // remainder, so the plan always ends exactly at T.
    std::vector<double> weight(N);
    for (int i = 0; i < N; ++i) {
        if (spacing == StepSpacing::Uniform) {
            weight[i] = 1.0;
        } else {
            weight[i] = std::pow(i + 1.0, exponent) - std::pow(static_cast<double>(i), exponent);
        }
    }
    double wsum = std::accumulate(weight.begin(), weight.end(), 0.0);
    std::vector<int> gap(N);
    std::vector<double> rem(N);
    long long used = 0;
    for (int i = 0; i < N; ++i) {
        double quota = (T - N) * weight[i] / wsum;
        gap[i] = static_cast<int>(std::floor(quota));
        rem[i] = quota - gap[i];
        used += gap[i];
    }
    long long extra = (T - N) - used;
    std::vector<int> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](int a, int b) { return rem[a] > rem[b]; });
    for (long long j = 0; j < extra; ++j) gap[order[j]] += 1;
    for (int& g : gap) g += 1;

    // Ascending gaps put the small steps at low t: dense where the signal
    // forms, sparse at high noise.
    std::sort(gap.begin(), gap.end());
    std::vector<int> plan(N);
    int acc = 0;
    for (int i = 0; i < N; ++i) {
        acc += gap[i];
        plan[i] = acc;
    }
    return plan;
}

void schedule_to_csv(const NoiseSchedule& s, std::ostream& out) {
    out << "# schema: schedule.v1\n";
    out << "t,beta,alpha,alpha_bar,sigma\n";
    out.precision(17);
    for (int t = 1; t <= s.T; ++t) {
        out << s.source_step(t) << ',' << s.beta_at(t) << ',' << s.alpha_at(t) << ','
            << s.alpha_bar_at(t) << ',' << s.sigma_at(t) << '\n';
    }
}

}  // namespace digfuse
