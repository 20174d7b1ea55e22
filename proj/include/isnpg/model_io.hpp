#pragma once

#include <string>

#include <json.hpp>

#include "isnpg/model.hpp"

namespace isnpg {

// Rows of width <= this are written dense, wider rows as {"idx", "p"} pairs.
inline constexpr std::size_t kDenseRowLimit = 64;

nlohmann::json model_to_json(const TabularPomg& model);
// Throws LoadError naming the offending field.
TabularPomg model_from_json(const nlohmann::json& doc);

void save_model(const TabularPomg& model, const std::string& path);
TabularPomg load_model(const std::string& path);

// Shared by the policy and config writers: two-space indent plus newline.
std::string dump_json(const nlohmann::json& doc);
void write_text_file(const std::string& path, const std::string& text);
std::string read_text_file(const std::string& path);

}  // namespace isnpg
