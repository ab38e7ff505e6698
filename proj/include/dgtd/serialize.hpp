#pragma once

#include <string>
#include <string_view>

#include "json.hpp"

#include "dgtd/distribution.hpp"
#include "dgtd/mdp.hpp"
#include "dgtd/models.hpp"
#include "dgtd/objectives.hpp"
#include "dgtd/types.hpp"

namespace dgtd {

// Shortest decimal string that parses back to exactly the same double.
std::string format_real(Real x);
Real parse_real(std::string_view text);

nlohmann::json vector_to_json(const VectorRef& v);
Vector vector_from_json(const nlohmann::json& j);
nlohmann::json matrix_to_json(const MatrixRef& m);
Matrix matrix_from_json(const nlohmann::json& j);

nlohmann::json grid_to_json(const SupportGrid& grid);
SupportGrid grid_from_json(const nlohmann::json& j);

nlohmann::json table_to_json(const ValueDistributionTable& table);
ValueDistributionTable table_from_json(const nlohmann::json& j);

nlohmann::json mdp_to_json(const TabularMDP& mdp);
TabularMDP mdp_from_json(const nlohmann::json& j);

void to_json(nlohmann::json& j, const GradientReport& report);

// Model checkpoints: {arch, sizes, activation where applicable, theta}.
nlohmann::json checkpoint_to_json(const LinearCdfModel& model,
                                  const VectorRef& theta);
nlohmann::json checkpoint_to_json(const SoftmaxMlpCdfModel& model,
                                  const VectorRef& theta);
nlohmann::json checkpoint_to_json(const QMlpModel& model,
                                  const VectorRef& theta);
nlohmann::json checkpoint_to_json(const LinearValueModel& model,
                                  const VectorRef& theta);
Vector checkpoint_theta(const nlohmann::json& j);

}  // namespace dgtd
