#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "aggnet/aggn_format.hpp"
#include "aggnet/layers.hpp"
#include "aggnet/model.hpp"

AGGNET_BEGIN_NAMESPACE

/// Every tensor of the store as float32 entries, in registration order.
std::vector<aggn::Entry> to_entries(const ParamStore& store);

/// Loads values by name. Every store tensor must be present with matching
/// dims; extra entries are rejected too.
void load_entries(ParamStore& store, const std::vector<aggn::Entry>& entries);

/// Checkpoint bytes: one JSON header line with the model config, '\n', then
/// the AGGN parameter blob.
std::string encode_checkpoint(const AggNet& model);
std::unique_ptr<AggNet> decode_checkpoint(std::string_view bytes);

void save_checkpoint(const std::filesystem::path& path, const AggNet& model);
std::unique_ptr<AggNet> load_checkpoint(const std::filesystem::path& path);

AGGNET_END_NAMESPACE
