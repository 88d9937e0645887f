#include "hsd/labels.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include "hsd/error.hpp"

namespace hsd {
namespace {

constexpr std::array<std::string_view, 2> kNames1A{"NOT", "HOF"};
constexpr std::array<std::string_view, 4> kNames1B{"HATE", "OFFN", "PRFN", "NONE"};
constexpr std::array<std::string_view, 3> kNamesConditional{"HATE", "OFFN", "PRFN"};

std::string upper(std::string_view text) {
    std::string out(text);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return out;
}

} // namespace

std::string_view to_string(Label1A label) { return kNames1A[static_cast<std::size_t>(label)]; }
std::string_view to_string(Label1B label) { return kNames1B[static_cast<std::size_t>(label)]; }

std::string_view to_string(Task task) { return task == Task::k1A ? "1a" : "1b"; }

std::string_view to_string(TaskMode mode) {
    switch (mode) {
    case TaskMode::kBinary1A: return "1a";
    case TaskMode::kFlat1B: return "1b-flat";
    case TaskMode::kConditional1B: return "1b-conditional";
    }
    return "?";
}

std::optional<Label1A> parse_label_1a(std::string_view text) {
    const auto key = upper(text);
    for (std::size_t i = 0; i < kNames1A.size(); ++i)
        if (key == kNames1A[i]) return static_cast<Label1A>(i);
    return std::nullopt;
}

std::optional<Label1B> parse_label_1b(std::string_view text) {
    const auto key = upper(text);
    for (std::size_t i = 0; i < kNames1B.size(); ++i)
        if (key == kNames1B[i]) return static_cast<Label1B>(i);
    return std::nullopt;
}

Task parse_task(std::string_view text) {
    const auto key = upper(text);
    if (key == "1A") return Task::k1A;
    if (key == "1B") return Task::k1B;
    throw ConfigError("unknown task '" + std::string(text) + "' (expected 1a or 1b)");
}

TaskMode parse_task_mode(std::string_view text) {
    const auto key = upper(text);
    if (key == "1A") return TaskMode::kBinary1A;
    if (key == "1B" || key == "1B-FLAT") return TaskMode::kFlat1B;
    if (key == "1B-CONDITIONAL") return TaskMode::kConditional1B;
    throw ConfigError("unknown task '" + std::string(text) +
                      "' (expected 1a, 1b-flat or 1b-conditional)");
}

Task dataset_task(TaskMode mode) { return mode == TaskMode::kBinary1A ? Task::k1A : Task::k1B; }

int num_classes(TaskMode mode) { return static_cast<int>(class_names(mode).size()); }

int output_units(TaskMode mode) { return mode == TaskMode::kBinary1A ? 1 : num_classes(mode); }

std::span<const std::string_view> class_names(TaskMode mode) {
    switch (mode) {
    case TaskMode::kBinary1A: return kNames1A;
    case TaskMode::kFlat1B: return kNames1B;
    case TaskMode::kConditional1B: return kNamesConditional;
    }
    return {};
}

std::span<const std::string_view> label_names(Task task) {
    if (task == Task::k1A) return kNames1A;
    return kNames1B;
}

} // namespace hsd
