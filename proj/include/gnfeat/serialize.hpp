#pragma once

#include <json.hpp>

#include "gnfeat/data.hpp"
#include "gnfeat/model.hpp"
#include "gnfeat/optim.hpp"

// JSON conversions for the configuration-level types. Unknown keys are
// rejected by the config loaders, not here.
namespace gnfeat {

void to_json(nlohmann::json& j, const Activation& a);
void from_json(const nlohmann::json& j, Activation& a);

void to_json(nlohmann::json& j, const TeacherSpec& t);
void from_json(const nlohmann::json& j, TeacherSpec& t);

void to_json(nlohmann::json& j, const DatasetManifest& m);
void from_json(const nlohmann::json& j, DatasetManifest& m);

void to_json(nlohmann::json& j, const DampingConfig& d);
void from_json(const nlohmann::json& j, DampingConfig& d);

void to_json(nlohmann::json& j, const TrainConfig& c);
void from_json(const nlohmann::json& j, TrainConfig& c);

}  // namespace gnfeat
