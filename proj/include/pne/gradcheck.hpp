#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "pne/network.hpp"

namespace pne {

// Finite-difference verification of every hand-written backward pass.
//
// Each component draws random probes (an offset, a parameter coordinate, ...)
// and compares the analytic derivative with a central difference. The error
// measure is relative_error(analytic, numeric) with a 1e-4 floor. Probes that
// land within 1e-3 of a non-differentiable locus (Triangular kinks and apex,
// ReLU hyperplanes) are redrawn. Box offset gradients are required to be
// exactly zero instead.

enum class Fault { None, GaussianJacobian };

Fault parse_fault(std::string_view name);

struct GradcheckOptions {
  std::size_t probes = 1000;
  std::uint64_t seed = 1234;
  double h = 1e-5;
  double tolerance = 1e-4;
  double network_tolerance = 1e-3;
  Fault fault = Fault::None;
};

struct ComponentResult {
  std::string name;
  std::size_t probes = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
  std::string note;
};

struct GradcheckReport {
  std::vector<ComponentResult> components;
  double seconds = 0.0;

  bool passed() const;
  std::vector<std::string> failures() const;
};

ComponentResult check_activation(ActivationKind kind, const GradcheckOptions& opts);
// Offset Jacobian of one embedding variant (label as in EmbeddingSpec::label()).
ComponentResult check_embedding_offsets(const std::string& label, const GradcheckOptions& opts);
// W and b gradients of an MLP embedding.
ComponentResult check_embedding_params(ActivationKind kind, const GradcheckOptions& opts);
// Every ConvGradients field, same-cloud and cross-cloud instances.
ComponentResult check_conv(const std::string& label, const GradcheckOptions& opts);
ComponentResult check_linear(const GradcheckOptions& opts);
ComponentResult check_layer_norm(const GradcheckOptions& opts);
ComponentResult check_block(const GradcheckOptions& opts);
ComponentResult check_cross_entropy(const GradcheckOptions& opts);
// Every parameter coordinate of a toy two-level network.
ComponentResult check_network(Task task, const GradcheckOptions& opts);

GradcheckReport run_gradcheck(const GradcheckOptions& opts);

}  // namespace pne
