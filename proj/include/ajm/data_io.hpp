#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ajm/model.hpp"
#include "ajm/simulate.hpp"

namespace ajm {

// longitudinal schema: id,time,y[,covariate...]; survival: id,T,delta[,covariate...]
JointData load_joint_data(const std::string& long_path, const std::string& surv_path);
void write_joint_data(const JointData& data, const std::string& long_path,
                      const std::string& surv_path);

// long-format truth file: kind,subject,key,value (preset settings only)
void save_truth(const SimTruth& truth, const std::string& path);
SimTruth load_truth(const std::string& path);

// shortest representation that round-trips a double exactly
std::string fmt_double(double v);

std::uint64_t fnv1a64(const void* data, std::size_t size);
std::uint64_t fnv1a64_file(const std::string& path);
std::string digest_hex(std::uint64_t digest);

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

}  // namespace ajm
