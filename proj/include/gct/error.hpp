#pragma once

#include <stdexcept>
#include <string>

namespace gct {

/// Base of every error the library throws. `kind()` is the stable name used
/// in CLI messages and manifests.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)), message_(what) {}
  const std::string& kind() const noexcept { return kind_; }
  /// what() without the kind prefix.
  const std::string& message() const noexcept { return message_; }

 private:
  std::string kind_;
  std::string message_;
};

#define GCT_DEFINE_ERROR(Name)                                   \
  class Name : public Error {                                    \
   public:                                                       \
    explicit Name(const std::string& what) : Error(#Name, what) {} \
  }

// core-data
GCT_DEFINE_ERROR(ParseError);
GCT_DEFINE_ERROR(OrderError);
GCT_DEFINE_ERROR(IoError);
GCT_DEFINE_ERROR(FormatError);
// signal
GCT_DEFINE_ERROR(ExtractorError);
GCT_DEFINE_ERROR(DimMismatch);
GCT_DEFINE_ERROR(EmptyTranscript);
GCT_DEFINE_ERROR(NonIntegerDelay);
GCT_DEFINE_ERROR(WindowTooLarge);
GCT_DEFINE_ERROR(TooShort);
GCT_DEFINE_ERROR(TimingMismatch);
// encoding
GCT_DEFINE_ERROR(SingularDesign);
GCT_DEFINE_ERROR(ShapeMismatch);
GCT_DEFINE_ERROR(InsufficientVoxels);
GCT_DEFINE_ERROR(DegenerateHull);
GCT_DEFINE_ERROR(EmptyCatalog);
// explain / storygen
GCT_DEFINE_ERROR(LLMError);
GCT_DEFINE_ERROR(NoViableCandidate);
GCT_DEFINE_ERROR(IncoherentOutput);
GCT_DEFINE_ERROR(ComplianceFailure);
// evaluation
GCT_DEFINE_ERROR(EmptyROI);
GCT_DEFINE_ERROR(DimensionMismatch);
GCT_DEFINE_ERROR(TooFewEvents);
GCT_DEFINE_ERROR(ZeroNormTarget);
GCT_DEFINE_ERROR(InvalidArgument);
// pipeline
GCT_DEFINE_ERROR(ConfigError);
GCT_DEFINE_ERROR(MissingDependency);
GCT_DEFINE_ERROR(StageFailure);

#undef GCT_DEFINE_ERROR

}  // namespace gct
