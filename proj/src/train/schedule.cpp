#include "mbtf/train/schedule.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mbtf/error.hpp"

namespace mbtf::train {

void ScheduleConfig::validate() const {
  if (!(d > 0.0)) throw ConfigError("schedule: d must be positive");
  if (warmup_steps < 1) throw ConfigError("schedule: warmup_steps must be at least 1");
  if (!(scale > 0.0)) throw ConfigError("schedule: scale must be positive");
}

ScheduleConfig ScheduleConfig::with_peak(double peak_lr, long warmup_steps, double d) {
  ScheduleConfig c;
  c.d = d;
  c.warmup_steps = warmup_steps;
  c.scale = 1.0;
  c.validate();
  c.scale = peak_lr / lr_schedule(warmup_steps, c);
  c.validate();
  return c;
}

double lr_schedule(long step, const ScheduleConfig& cfg) {
  cfg.validate();
  if (step < 1) throw ValidationError("lr schedule: step must be >= 1, got " + std::to_string(step));
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(cfg.warmup_steps);
  return cfg.scale * std::pow(cfg.d, -0.5) * std::min(std::pow(s, -0.5), s * std::pow(w, -1.5));
}

}  // namespace mbtf::train
