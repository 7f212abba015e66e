#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ppsvm/errors.hpp"
#include "ppsvm/evalx.hpp"
#include "ppsvm/keyring.hpp"
#include "ppsvm/svm.hpp"
#include "ppsvm/transform.hpp"

namespace ppsvm {

// 17 significant digits: parses back to the identical double.
std::string format_double(double v);

// A template store is a directory holding templates.csv plus manifest.json
// (dim, count, protected flag, key_ids). A store is either all-plain or
// all-protected.
void save_templates(const std::vector<Template>& ts,
                    const std::filesystem::path& dir);
std::vector<Template> load_templates(const std::filesystem::path& dir);

void save_protected(const std::vector<ProtectedTemplate>& ts,
                    const std::filesystem::path& dir);
std::vector<ProtectedTemplate> load_protected(const std::filesystem::path& dir);

void save_keyring(const KeyCondition& kc, const std::filesystem::path& file);
KeyCondition load_keyring(const std::filesystem::path& file);

void save_model(const SvmModel& m, const std::filesystem::path& file);
SvmModel load_model(const std::filesystem::path& file);

// JSON report plus a tau,far,frr CSV for plotting. CSV thresholds are
// printed at 6 significant digits; the JSON keeps exact values.
void save_report(const EvalReport& r, const std::filesystem::path& json_file,
                 const std::filesystem::path& csv_file);
EvalReport load_report(const std::filesystem::path& json_file);

}  // namespace ppsvm
