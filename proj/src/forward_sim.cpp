#include "huntbranch/forward_sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

#include "huntbranch/errors.hpp"

namespace huntbranch {

std::uint64_t PointMeasure::total() const noexcept {
  return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
}

namespace {

struct Live {
  State state;
  std::uint64_t birth;
  double mass;
  std::uint32_t slot;  // position in the state's member list
};

// Population bucketed by state so the firing particle is found in O(states).
class Population {
 public:
  explicit Population(std::size_t states) : members_(states) {}

  std::size_t size() const noexcept { return live_.size(); }
  std::uint64_t count(State s) const noexcept { return members_[s].size(); }
  const Live& at(std::uint32_t i) const { return live_[i]; }
  std::uint32_t member(State s, std::uint64_t k) const { return members_[s][k]; }

  void add(State s, std::uint64_t birth, double mass) {
    const auto index = static_cast<std::uint32_t>(live_.size());
    live_.push_back({s, birth, mass, static_cast<std::uint32_t>(members_[s].size())});
    members_[s].push_back(index);
  }

  void rebirth(std::uint32_t i, std::uint64_t birth, double mass) {
    live_[i].birth = birth;
    live_[i].mass = mass;
  }

  void move(std::uint32_t i, State to) {
    detach(i);
    live_[i].state = to;
    live_[i].slot = static_cast<std::uint32_t>(members_[to].size());
    members_[to].push_back(i);
  }

  void remove(std::uint32_t i) {
    detach(i);
    const auto last = static_cast<std::uint32_t>(live_.size() - 1);
    if (i != last) {
      live_[i] = live_[last];
      members_[live_[i].state][live_[i].slot] = i;
    }
    live_.pop_back();
  }

  PointMeasure snapshot(double t, std::uint64_t replicate, bool with_particles) const {
    PointMeasure pm;
    pm.time = t;
    pm.counts.resize(members_.size());
    for (std::size_t s = 0; s < members_.size(); ++s) pm.counts[s] = members_[s].size();
    if (with_particles) {
      pm.particles.reserve(live_.size());
      for (const Live& p : live_) pm.particles.push_back({p.state, {replicate, p.birth}, p.mass});
      std::sort(pm.particles.begin(), pm.particles.end(),
                [](const Particle& a, const Particle& b) { return a.id < b.id; });
    }
    return pm;
  }

 private:
  void detach(std::uint32_t i) {
    auto& list = members_[live_[i].state];
    const std::uint32_t slot = live_[i].slot;
    const std::uint32_t moved = list.back();
    list[slot] = moved;
    live_[moved].slot = slot;
    list.pop_back();
  }

  std::vector<Live> live_;
  std::vector<std::vector<std::uint32_t>> members_;
};

void validate(const MotionModel& motion, const BranchingLaw& law, std::span<const State> initial,
              const SimConfig& config) {
  if (law.size() != motion.size()) throw ModelError("simulate: motion and law state counts differ");
  if (initial.empty()) throw std::invalid_argument("simulate: initial population is empty");
  for (State s : initial)
    if (s >= motion.size()) throw std::out_of_range("simulate: initial state out of range");
  if (!(config.horizon >= config.start_time)) throw std::invalid_argument("simulate: horizon before start");
  if (config.population_cap < 1) throw std::invalid_argument("simulate: population cap must be >= 1");
  if (initial.size() > config.population_cap)
    throw std::invalid_argument("simulate: initial population exceeds the cap");
  for (std::size_t i = 0; i < config.checkpoints.size(); ++i) {
    const double c = config.checkpoints[i];
    if (c < config.start_time || c > config.horizon)
      throw std::invalid_argument("simulate: checkpoint outside [start, horizon]");
    if (i > 0 && c < config.checkpoints[i - 1]) throw std::invalid_argument("simulate: checkpoints not sorted");
  }
  for (State x = 0; x < law.size(); ++x)
    if (law.beta(x) > 0.0 && !law.offspring(x).has_table())
      throw std::invalid_argument("simulate: offspring law at a branching state cannot be sampled");
}

}  // namespace

SimResult simulate(const MotionModel& motion, const BranchingLaw& law, std::span<const State> initial,
                   const SimConfig& config, Rng& rng) {
  validate(motion, law, initial, config);
  const std::size_t n_states = motion.size();
  std::vector<double> exit(n_states), beta(n_states), event_rate(n_states);
  for (State s = 0; s < n_states; ++s) {
    exit[s] = motion.exit_rate(s);
    beta[s] = law.beta(s);
    event_rate[s] = exit[s] + beta[s];
  }

  SimResult result;
  result.log.checkpoints = config.checkpoints;
  Population pop(n_states);
  std::uint64_t next_birth = config.first_birth_order;
  for (State s : initial) pop.add(s, next_birth++, config.initial_mass);

  const auto& checkpoints = config.checkpoints;
  std::size_t next_checkpoint = 0;
  double t = config.start_time;
  auto id_of = [&](std::uint32_t i) { return ParticleId{config.replicate, pop.at(i).birth}; };

  for (;;) {
    double total = 0.0;
    for (State s = 0; s < n_states; ++s) total += static_cast<double>(pop.count(s)) * event_rate[s];
    const double t_next = total > 0.0 ? t + rng.exponential(total) : std::numeric_limits<double>::infinity();
    while (next_checkpoint < checkpoints.size() && checkpoints[next_checkpoint] < t_next) {
      result.snapshots.push_back(
          pop.snapshot(checkpoints[next_checkpoint], config.replicate, config.record_particles));
      ++next_checkpoint;
    }
    if (t_next > config.horizon) break;
    t = t_next;

    double target = rng.uniform() * total;
    State s = 0;
    for (; s + 1 < n_states; ++s) {
      const double r = static_cast<double>(pop.count(s)) * event_rate[s];
      if (target < r) break;
      target -= r;
    }
    while (pop.count(s) == 0) --s;  // rounding past the last occupied state
    const std::uint32_t index = pop.member(s, rng.below(pop.count(s)));
    const ParticleId id = id_of(index);

    if (rng.uniform() * event_rate[s] < beta[s]) {
      const std::uint64_t k = law.offspring(s).sample(rng);
      if (pop.size() - 1 + k > config.population_cap) {
        result.status = SimStatus::kOverflow;
        result.end_time = t;
        return result;
      }
      const double child_mass = pop.at(index).mass / static_cast<double>(k);
      if (config.record_events)
        result.log.events.push_back(
            {t, EventKind::kFission, id, s, s, static_cast<std::uint32_t>(k), next_birth});
      pop.rebirth(index, next_birth++, child_mass);
      for (std::uint64_t c = 1; c < k; ++c) pop.add(s, next_birth++, child_mass);
      continue;
    }

    double pick = rng.uniform() * exit[s];
    State to = s;
    bool chosen = false;
    for (State y = 0; y < n_states; ++y) {
      const double q = motion.rate(s, y);
      if (q <= 0.0) continue;
      to = y;
      if (pick < q) {
        chosen = true;
        break;
      }
      pick -= q;
    }
    // Past every jump rate: killing, unless rounding overshot a model without killing.
    const bool killed = !chosen && (motion.kill_rate(s) > 0.0 || to == s);
    if (killed) {
      if (config.record_events) result.log.events.push_back({t, EventKind::kKilling, id, s, s, 0, 0});
      pop.remove(index);
    } else {
      if (config.record_events) result.log.events.push_back({t, EventKind::kJump, id, s, to, 0, 0});
      pop.move(index, to);
    }
  }
  result.end_time = config.horizon;
  return result;
}

double observable(const PointMeasure& snapshot, std::span<const double> f) {
  if (f.size() != snapshot.counts.size()) throw std::invalid_argument("observable: f has wrong length");
  double sum = 0.0;
  for (std::size_t s = 0; s < f.size(); ++s) sum += static_cast<double>(snapshot.counts[s]) * f[s];
  return sum;
}

std::vector<MartingalePoint> martingale_path(std::span<const PointMeasure> snapshots,
                                             const SpectralTriple& triple, std::span<const double> f) {
  const auto n = static_cast<std::size_t>(triple.phi.size());
  if (f.size() != n) throw std::invalid_argument("martingale_path: f has wrong length");
  std::vector<double> phi(n), f_phi(n);
  for (std::size_t s = 0; s < n; ++s) {
    phi[s] = triple.phi(static_cast<Eigen::Index>(s));
    f_phi[s] = f[s] * phi[s];
  }
  std::vector<MartingalePoint> path;
  path.reserve(snapshots.size());
  for (const PointMeasure& snap : snapshots) {
    const double decay = std::exp(-triple.lambda1 * snap.time);
    path.push_back({snap.time, decay * observable(snap, phi), decay * observable(snap, f_phi)});
  }
  return path;
}

}  // namespace huntbranch
