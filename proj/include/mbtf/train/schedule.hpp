#pragma once

namespace mbtf::train {

// lr = scale * d^-0.5 * min(step^-0.5, step * warmup^-1.5). scale = 1 is the
// published schedule; toy runs lower it.
struct ScheduleConfig {
  double d = 1e-3;
  long warmup_steps = 5000;
  double scale = 1.0;

  void validate() const;
  // Same shape with the peak (reached at step = warmup) set to `peak_lr`.
  static ScheduleConfig with_peak(double peak_lr, long warmup_steps, double d = 1e-3);
};

// Throws ValidationError for step < 1.
double lr_schedule(long step, const ScheduleConfig& cfg = {});

}  // namespace mbtf::train
