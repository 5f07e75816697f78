// Copyright 2026 The ModalPrompt Lab Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <stdexcept>
#include <string>

namespace modalprompt {

/// Base class of every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MODALPROMPT_DEFINE_ERROR(Name)   \
  class Name : public Error {            \
   public:                               \
    using Error::Error;                  \
  }

MODALPROMPT_DEFINE_ERROR(ConfigError);
MODALPROMPT_DEFINE_ERROR(ShapeError);
MODALPROMPT_DEFINE_ERROR(InputError);
MODALPROMPT_DEFINE_ERROR(StateError);
MODALPROMPT_DEFINE_ERROR(OrderingError);
MODALPROMPT_DEFINE_ERROR(LookupError);
MODALPROMPT_DEFINE_ERROR(IntegrityError);
MODALPROMPT_DEFINE_ERROR(SchemaError);
MODALPROMPT_DEFINE_ERROR(CapacityError);
MODALPROMPT_DEFINE_ERROR(ParseError);
MODALPROMPT_DEFINE_ERROR(UndefinedMetricError);

#undef MODALPROMPT_DEFINE_ERROR

}  // namespace modalprompt
