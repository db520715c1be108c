#pragma once

#include <string>

#include "pptr/common/error.hpp"

namespace pptr {

enum class Task { Segmentation, Classification };

inline Task parse_task(const std::string& s) {
  if (s == "seg" || s == "segmentation") return Task::Segmentation;
  if (s == "cls" || s == "classification") return Task::Classification;
  throw Error(Errc::InvalidConfig, "unknown task '" + s + "'");
}

inline std::string to_string(Task t) { return t == Task::Segmentation ? "seg" : "cls"; }

}  // namespace pptr
