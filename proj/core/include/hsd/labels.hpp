#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>

namespace hsd {

/// Subtask 1A: coarse binary label.
enum class Label1A : std::uint8_t { kNot, kHof };

/// Subtask 1B: fine-grained label. NONE corresponds to 1A NOT.
enum class Label1B : std::uint8_t { kHate, kOffn, kPrfn, kNone };

/// Which label column a dataset is required to carry.
enum class Task : std::uint8_t { k1A, k1B };

/// Classification target a model is trained for.
///   kBinary1A      NOT/HOF, single sigmoid logit
///   kFlat1B        HATE/OFFN/PRFN/NONE, 4-way softmax
///   kConditional1B HATE/OFFN/PRFN over HOF items only, 3-way softmax
enum class TaskMode : std::uint8_t { kBinary1A, kFlat1B, kConditional1B };

std::string_view to_string(Label1A label);
std::string_view to_string(Label1B label);
std::string_view to_string(Task task);
std::string_view to_string(TaskMode mode);

/// Case-insensitive label parsing; nullopt for unknown strings.
std::optional<Label1A> parse_label_1a(std::string_view text);
std::optional<Label1B> parse_label_1b(std::string_view text);

/// Accepts "1a"/"1A", "1b"/"1B".
Task parse_task(std::string_view text);
/// Accepts "1a", "1b-flat" (or "1b"), "1b-conditional".
TaskMode parse_task_mode(std::string_view text);

Task dataset_task(TaskMode mode);

/// Number of classes in the evaluation taxonomy (2, 4 or 3).
int num_classes(TaskMode mode);
/// Number of output units of the model head: 1 for the sigmoid head, K otherwise.
int output_units(TaskMode mode);

/// Class names in taxonomy declaration order.
std::span<const std::string_view> class_names(TaskMode mode);
/// Label histogram keys for a dataset task, in declaration order.
std::span<const std::string_view> label_names(Task task);

} // namespace hsd
