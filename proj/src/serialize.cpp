#include "dgtd/serialize.hpp"

#include <array>
#include <charconv>
#include <stdexcept>
#include <system_error>

namespace dgtd {

std::string format_real(Real x) {
  std::array<char, 64> buf;
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), x);
  if (res.ec != std::errc())
    throw std::runtime_error("format_real: conversion failed");
  return std::string(buf.data(), res.ptr);
}

Real parse_real(std::string_view text) {
  Real value = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(),
                                   value);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size())
    throw std::invalid_argument("parse_real: not a number: " +
                                std::string(text));
  return value;
}

nlohmann::json vector_to_json(const VectorRef& v) {
  auto j = nlohmann::json::array();
  for (int i = 0; i < v.size(); ++i) j.push_back(v[i]);
  return j;
}

Vector vector_from_json(const nlohmann::json& j) {
  if (!j.is_array()) throw std::invalid_argument("expected a JSON array");
  Vector v(static_cast<long>(j.size()));
  for (long i = 0; i < v.size(); ++i) v[i] = j[i].get<Real>();
  return v;
}

nlohmann::json matrix_to_json(const MatrixRef& m) {
  auto j = nlohmann::json::array();
  for (int i = 0; i < m.rows(); ++i) j.push_back(vector_to_json(m.row(i)));
  return j;
}

Matrix matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty())
    throw std::invalid_argument("expected a nonempty JSON array of rows");
  const long rows = static_cast<long>(j.size());
  const Vector first = vector_from_json(j[0]);
  Matrix m(rows, first.size());
  m.row(0) = first;
  for (long i = 1; i < rows; ++i) {
    const Vector row = vector_from_json(j[i]);
    if (row.size() != m.cols())
      throw std::invalid_argument("ragged JSON matrix");
    m.row(i) = row;
  }
  return m;
}

nlohmann::json grid_to_json(const SupportGrid& grid) {
  return {{"v_min", grid.v_min()},
          {"v_max", grid.v_max()},
          {"m", grid.size()}};
}

SupportGrid grid_from_json(const nlohmann::json& j) {
  return SupportGrid(j.at("v_min").get<Real>(), j.at("v_max").get<Real>(),
                     j.at("m").get<int>());
}

nlohmann::json table_to_json(const ValueDistributionTable& table) {
  return {{"grid", grid_to_json(table.grid)},
          {"probs", matrix_to_json(table.probs)}};
}

ValueDistributionTable table_from_json(const nlohmann::json& j) {
  return ValueDistributionTable(grid_from_json(j.at("grid")),
                                matrix_from_json(j.at("probs")));
}

nlohmann::json mdp_to_json(const TabularMDP& mdp) {
  return {{"n_states", mdp.n_states},
          {"n_actions", mdp.n_actions},
          {"gamma", mdp.gamma},
          {"P", matrix_to_json(mdp.P)},
          {"R", matrix_to_json(mdp.R)}};
}

TabularMDP mdp_from_json(const nlohmann::json& j) {
  return TabularMDP(j.at("n_states").get<int>(), j.at("n_actions").get<int>(),
                    j.at("gamma").get<Real>(), matrix_from_json(j.at("P")),
                    matrix_from_json(j.at("R")));
}

void to_json(nlohmann::json& j, const GradientReport& report) {
  j = {{"j_dmspbe", report.j},
       {"grad", vector_to_json(report.grad)},
       {"w_star", vector_to_json(report.w_star)},
       {"h_term", vector_to_json(report.h_term)}};
}

namespace {

const char* activation_name(Activation a) {
  return a == Activation::tanh_act ? "tanh" : "relu";
}

}  // namespace

nlohmann::json checkpoint_to_json(const LinearCdfModel& model,
                                  const VectorRef& theta) {
  return {{"arch", "linear-cdf"},
          {"num_inputs", model.num_inputs()},
          {"m", model.num_atoms()},
          {"param_dim", model.param_dim()},
          {"theta", vector_to_json(theta)}};
}

nlohmann::json checkpoint_to_json(const SoftmaxMlpCdfModel& model,
                                  const VectorRef& theta) {
  return {{"arch", "softmax-mlp"},
          {"input_dim", model.input_dim()},
          {"hidden", model.hidden_dim()},
          {"m", model.num_atoms()},
          {"activation", activation_name(model.activation())},
          {"theta", vector_to_json(theta)}};
}

nlohmann::json checkpoint_to_json(const QMlpModel& model,
                                  const VectorRef& theta) {
  return {{"arch", "q-mlp"},
          {"input_dim", model.input_dim()},
          {"hidden", model.hidden_dim()},
          {"theta", vector_to_json(theta)}};
}

nlohmann::json checkpoint_to_json(const LinearValueModel& model,
                                  const VectorRef& theta) {
  return {{"arch", "linear-value"},
          {"num_inputs", model.num_inputs()},
          {"param_dim", model.param_dim()},
          {"theta", vector_to_json(theta)}};
}

Vector checkpoint_theta(const nlohmann::json& j) {
  return vector_from_json(j.at("theta"));
}

}  // namespace dgtd
