#pragma once

#include <memory>

#include "ragfc/backends.hpp"

namespace ragfc {

// Fully offline stand-in for a live provider: recognizes each prompt shape
// used by the pipeline and answers with text derived only from a hash of the
// request, so whole experiments are reproducible byte for byte. Embeddings
// are the hashed bag-of-words fixture; token scoring is the uniform model.
std::shared_ptr<ScriptedBackend> make_demo_backend(std::size_t embed_dim = 256,
                                                   std::size_t vocab_size = 100);

}  // namespace ragfc
