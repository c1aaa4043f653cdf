#pragma once

#include <string>
#include <vector>

namespace rfcn {

struct ComponentCheck {
    std::string name;
    double max_rel_err = 0.0;
    double rel_tol = 1e-4;
    int coords = 0;
    double seconds = 0.0;
    bool pass = false;
};

struct CheckOptions {
    std::string filter;        // substring match on component names; empty = all
    std::string inject_fault;  // testing aid: corrupts the analytic gradient of
                               // the named component so the failure path is
                               // exercised end to end
};

/// Finite-difference verification of every layer, every recurrent cell, and
/// the full rfc-lenet / scale-0.25 rfc-vgg graphs, at 64-bit precision.
std::vector<ComponentCheck> run_gradient_checks(const CheckOptions& opts = {});

std::string render_check_table(const std::vector<ComponentCheck>& checks);

}  // namespace rfcn
