#pragma once

#include "ipga/kernels.hpp"

#include <cstddef>

// Internal: backend-specific tables behind the public dispatch.

namespace ipga::kernels::detail {

template <class T> const KernelTable<T>& scalar_table();

// Defined in kernels_avx2.cpp; null when built for a non-x86 target.
template <class T> const KernelTable<T>* avx2_table();

} // namespace ipga::kernels::detail
