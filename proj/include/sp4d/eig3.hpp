#pragma once

#include "sp4d/core.hpp"

namespace sp4d {

struct Eig3 {
    Vec3 values;  // ascending
    Mat3 vectors; // columns are the matching orthonormal eigenvectors
};

// Symmetric 3x3 eigendecomposition (cyclic Jacobi). Eigenvalues ascending;
// each eigenvector's first component above 1e-12 in magnitude is made
// positive so repeated calls are deterministic.
Eig3 eig_sym3(const Sym3& m);

}  // namespace sp4d
