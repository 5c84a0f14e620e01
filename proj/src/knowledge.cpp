#include "priorlane/knowledge.hpp"

#include "priorlane/errors.hpp"
#include "priorlane/ops.hpp"

namespace priorlane {

Tensor patch_matrix(const LocalPrior& prior, int patch) {
  if (patch < 1 || prior.s % patch != 0)
    throw ConfigError("embed_knowledge: patch size " + std::to_string(patch) +
                      " does not divide prior size " + std::to_string(prior.s));
  const int g = prior.s / patch;
  const int c = prior.c;
  const int pvec = patch * patch * c;
  std::vector<double> data(size_t(g) * g * pvec);
  size_t out = 0;
  for (int pr = 0; pr < g; ++pr) {
    for (int pc = 0; pc < g; ++pc) {
      for (int py = 0; py < patch; ++py) {
        const int row = pr * patch + py;
        for (int px = 0; px < patch; ++px) {
          const int col = pc * patch + px;
          for (int ch = 0; ch < c; ++ch)
            data[out++] =
                double(prior.cells[(size_t(row) * prior.s + col) * c + ch]);
        }
      }
    }
  }
  return Tensor::from_data({g * g, pvec}, std::move(data));
}

KnowledgeEmbedding embed_knowledge(const LocalPrior& prior,
                                   const Tensor& projection, int patch) {
  Tensor patches = patch_matrix(prior, patch);
  if (projection.rank() != 2 || projection.dim(0) != patches.dim(1))
    throw ConfigError("embed_knowledge: projection " +
                      shape_str(projection.shape()) + " does not accept " +
                      std::to_string(patches.dim(1)) + "-element patches");
  KnowledgeEmbedding emb;
  emb.patch = patch;
  emb.grid = prior.s / patch;
  emb.embed_dim = projection.dim(1);
  emb.tokens = matmul(patches, projection);
  return emb;
}

}  // namespace priorlane
