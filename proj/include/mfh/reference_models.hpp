#pragma once

#include "mfh/models.hpp"

namespace mfh {

// Generic Kac kernels without detailed balance, scaled to max exit rate 1/2
// (so v_norm = 1). Defined for m = 2 and m = 3.
KacModelConfig reference_kac_config(int m);
ModelSpec reference_kac_model(int m);
NBodyState reference_kac_initial(int m);

// Two-level system with non-diagonal h1 and a swap-symmetric pair term of
// operator norm 1/2, hbar = 1.
QuantumModelConfig reference_quantum_config();
ModelSpec reference_quantum_model();
NBodyState reference_quantum_initial();

}  // namespace mfh
