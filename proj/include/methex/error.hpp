#pragma once

#include <stdexcept>
#include <string>

namespace methex {

// Base class for every error raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define METHEX_DEFINE_ERROR(Name)          \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

METHEX_DEFINE_ERROR(ParseError);
METHEX_DEFINE_ERROR(DimensionError);
METHEX_DEFINE_ERROR(DimensionMismatch);
METHEX_DEFINE_ERROR(SchemeMismatch);
METHEX_DEFINE_ERROR(EmptyTags);
METHEX_DEFINE_ERROR(EmptyData);
METHEX_DEFINE_ERROR(EmptyPartition);
METHEX_DEFINE_ERROR(UnknownCategory);
METHEX_DEFINE_ERROR(NoValidPath);
METHEX_DEFINE_ERROR(InvalidGold);
METHEX_DEFINE_ERROR(InvalidBio);
METHEX_DEFINE_ERROR(DegenerateVariance);
METHEX_DEFINE_ERROR(MissingVectors);
METHEX_DEFINE_ERROR(IoError);

#undef METHEX_DEFINE_ERROR

// Wraps a nested failure with the year of the chronological step that raised it.
class YearError : public Error {
 public:
  YearError(int year, const std::string& what)
      : Error("year " + std::to_string(year) + ": " + what), year_(year) {}
  int year() const noexcept { return year_; }

 private:
  int year_;
};

}  // namespace methex
