#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace geomm::tok {

// Linear beta schedule with precomputed alpha tables.
struct DiffusionSchedule {
    int timesteps = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
    std::vector<double> betas, alphas, alpha_bar;

    void build() {
        if (!(beta_start > 0.0 && beta_start < beta_end && beta_end < 1.0))
            throw std::invalid_argument("DiffusionSchedule: need 0 < beta_start < beta_end < 1");
        if (timesteps < 1) throw std::invalid_argument("DiffusionSchedule: timesteps >= 1");
        betas.resize(static_cast<std::size_t>(timesteps));
        alphas.resize(betas.size());
        alpha_bar.resize(betas.size());
        double cum = 1.0;
        for (int t = 0; t < timesteps; ++t) {
            const double frac = timesteps == 1 ? 0.0 : static_cast<double>(t) / (timesteps - 1);
            betas[static_cast<std::size_t>(t)] = beta_start + (beta_end - beta_start) * frac;
            alphas[static_cast<std::size_t>(t)] = 1.0 - betas[static_cast<std::size_t>(t)];
            cum *= alphas[static_cast<std::size_t>(t)];
            alpha_bar[static_cast<std::size_t>(t)] = cum;
        }
    }

    bool built() const { return !betas.empty(); }

    // Evenly spaced subsampling used at decode time: num_steps indices from
    // timesteps-1 down to 0 inclusive.
    std::vector<int> subsample(int num_steps) const {
        if (num_steps < 1 || num_steps > timesteps)
            throw std::invalid_argument("DiffusionSchedule: num_steps must be in [1, timesteps]");
        std::vector<int> steps(static_cast<std::size_t>(num_steps));
        if (num_steps == 1) {
            steps[0] = timesteps - 1;
            return steps;
        }
        for (int i = 0; i < num_steps; ++i) {
            const double f = static_cast<double>(i) / (num_steps - 1);
            steps[static_cast<std::size_t>(i)] =
                static_cast<int>(std::lround((1.0 - f) * (timesteps - 1)));
        }
        return steps;
    }
};

}  // namespace geomm::tok
