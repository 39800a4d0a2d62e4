#pragma once

#include "infotok/harness.hpp"

#include <iosfwd>
#include <string>

namespace infotok::cfg {

// Plain-text training configuration: `[section]` headers with `key = value`
// lines, `#` or `;` comments. Sections and keys mirror TrainConfig; unknown
// sections or keys are errors. See configs/default.cfg for the full layout.
harness::TrainConfig parse_train_config(std::istream& in);
harness::TrainConfig load_train_config(const std::string& path);

// The default configuration in config-file form.
std::string default_config_text();

} // namespace infotok::cfg
