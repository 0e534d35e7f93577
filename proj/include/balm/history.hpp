#pragma once

#include <vector>

namespace balm {

struct EpochRecord {
  int epoch = 0;
  float train_loss = 0.0f;
  float val_loss = 0.0f;
  double seconds = 0.0;       // wall-clock; diagnostic, not part of determinism
  int skipped_batches = 0;
};

// Per-epoch loss records backing learning curves and convergence tests.
// Epoch indices are contiguous from 0.
struct TrainHistory {
  std::vector<EpochRecord> epochs;

  bool empty() const { return epochs.empty(); }
  const EpochRecord& back() const { return epochs.back(); }
};

}  // namespace balm
