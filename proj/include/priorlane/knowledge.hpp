#pragma once

// Knowledge embedding: non-overlapping P x P patches of the local prior,
// flattened row-major and mapped by a trainable linear projection to a token
// sequence of (S/P)^2 x E_p.

#include "priorlane/grid_map.hpp"
#include "priorlane/tensor.hpp"

namespace priorlane {

struct KnowledgeEmbedding {
  Tensor tokens;  // [L, E_p], L = (S/P)^2
  int patch = 0;
  int grid = 0;  // S / P tokens per side
  int embed_dim = 0;
};

// Constant [L x (P*P*C)] matrix of flattened patches, row-major over the
// patch grid, cells row-major channel-minor inside a patch.
Tensor patch_matrix(const LocalPrior& prior, int patch);

// projection is [(P*P*C) x E_p]; gradient flows to it.
KnowledgeEmbedding embed_knowledge(const LocalPrior& prior,
                                   const Tensor& projection, int patch);

}  // namespace priorlane
