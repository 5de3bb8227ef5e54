// Copyright 2026 The lrc Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string_view>

namespace lrc {

using WarningSink = std::function<void(std::string_view)>;

// Routes warnings (default: stderr). Passing an empty sink restores stderr.
// Returns the previous sink.
WarningSink set_warning_sink(WarningSink sink);
void warn(std::string_view message);

} // namespace lrc
