#pragma once

// Scalar type used by the tensor core. The library is compiled once per
// precision; each flavour lives in its own inline namespace so a float and a
// double build can be linked into the same executable.

#ifdef AGGNET_DOUBLE
#define AGGNET_PRECISION_NS f64
#else
#define AGGNET_PRECISION_NS f32
#endif

#define AGGNET_BEGIN_NAMESPACE \
  namespace aggnet {           \
  inline namespace AGGNET_PRECISION_NS {
#define AGGNET_END_NAMESPACE \
  }                          \
  }

AGGNET_BEGIN_NAMESPACE
#ifdef AGGNET_DOUBLE
using Real = double;
#else
using Real = float;
#endif
AGGNET_END_NAMESPACE
