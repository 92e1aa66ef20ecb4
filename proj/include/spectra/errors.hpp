#pragma once

#include <stdexcept>
#include <string>

namespace spectra {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// tensor-train structure / algebra
class StructurallyInvalid : public Error { public: using Error::Error; };
class ZeroNorm : public Error { public: using Error::Error; };
class LengthMismatch : public Error { public: using Error::Error; };

// time evolution
class NonCommensurateTime : public Error { public: using Error::Error; };
class TruncationBudgetExceeded : public Error { public: using Error::Error; };
class MemoryBudgetExceeded : public Error { public: using Error::Error; };
class UnsupportedOrder : public Error { public: using Error::Error; };

// filter construction and evaluation
class WidthTooLarge : public Error { public: using Error::Error; };
class NonPositiveParameter : public Error { public: using Error::Error; };
class IndexMismatch : public Error { public: using Error::Error; };
class VanishingDenominator : public Error { public: using Error::Error; };

// model / observables
class UnknownObservable : public Error { public: using Error::Error; };

// sampling
class NegativeWeight : public Error { public: using Error::Error; };
class SeedBelowCutoff : public Error { public: using Error::Error; };
class ChainStuck : public Error { public: using Error::Error; };

// exact diagonalization oracle
class SizeTooLarge : public Error { public: using Error::Error; };
class EmptyWindow : public Error { public: using Error::Error; };
class MissingOverlaps : public Error { public: using Error::Error; };
class OutOfThermalRange : public Error { public: using Error::Error; };

// configuration and caching
class UnknownKey : public Error { public: using Error::Error; };
class MissingRequired : public Error { public: using Error::Error; };
class RuleUnresolvable : public Error { public: using Error::Error; };
class CorruptCache : public Error { public: using Error::Error; };
class HashMismatch : public Error { public: using Error::Error; };

}  // namespace spectra
