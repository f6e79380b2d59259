#pragma once

#include <stdexcept>
#include <string>

namespace debias {

/// Base class of every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define DEBIAS_DEFINE_ERROR(Name)         \
  class Name : public Error {             \
   public:                                \
    using Error::Error;                   \
  }

// lexicon
DEBIAS_DEFINE_ERROR(MismatchedTupleLength);
DEBIAS_DEFINE_ERROR(OverlapError);
DEBIAS_DEFINE_ERROR(DuplicateConcept);
DEBIAS_DEFINE_ERROR(InvalidDomain);

// corpus
DEBIAS_DEFINE_ERROR(EmptyCorpus);

// encoder
DEBIAS_DEFINE_ERROR(ContextOverflow);
DEBIAS_DEFINE_ERROR(BadSpan);
DEBIAS_DEFINE_ERROR(InvalidEncoderSpec);
DEBIAS_DEFINE_ERROR(CheckpointError);
DEBIAS_DEFINE_ERROR(InvalidQuery);

// geometry
DEBIAS_DEFINE_ERROR(EmptyInput);
DEBIAS_DEFINE_ERROR(DegenerateRho);
DEBIAS_DEFINE_ERROR(LengthMismatch);
DEBIAS_DEFINE_ERROR(MismatchedOccurrences);

// tuner
DEBIAS_DEFINE_ERROR(InsufficientCorpus);
DEBIAS_DEFINE_ERROR(InvalidConfig);
DEBIAS_DEFINE_ERROR(EmptyTrail);

// evalharness
DEBIAS_DEFINE_ERROR(DegenerateVariance);
DEBIAS_DEFINE_ERROR(EmptyAfterFilter);
DEBIAS_DEFINE_ERROR(ParseError);
DEBIAS_DEFINE_ERROR(PerplexityTooLarge);
DEBIAS_DEFINE_ERROR(InsufficientOccurrences);

#undef DEBIAS_DEFINE_ERROR

/// Raised when a training step produces a non-finite loss or gradient.
/// Carries the diagnostics needed to investigate the blow-up.
class NonFiniteLoss : public Error {
 public:
  NonFiniteLoss(const std::string& what, double bias, double representation,
                double grad_norm)
      : Error(what),
        bias(bias),
        representation(representation),
        grad_norm(grad_norm) {}

  double bias;
  double representation;
  double grad_norm;
};

}  // namespace debias
