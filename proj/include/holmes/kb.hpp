#pragma once

#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace holmes::kb {

struct PartEntry {
    std::string name;
    bool visible = true;
    // Parts whose visual extent fully contains this one.
    std::vector<std::string> within;

    bool operator==(const PartEntry&) const = default;
};

struct Concept {
    std::string id;
    // Broader concepts, nearest first.
    std::vector<std::string> hypernyms;
    std::vector<PartEntry> parts;

    bool operator==(const Concept&) const = default;
};

// Holonym -> meronym mapping. Immutable once loaded; concepts keep document order.
class HolMeMap {
public:
    HolMeMap() = default;
    explicit HolMeMap(std::vector<Concept> concepts);

    const std::vector<Concept>& concepts() const { return concepts_; }
    const Concept* find(std::string_view id) const;
    bool contains(std::string_view id) const { return find(id) != nullptr; }
    std::size_t size() const { return concepts_.size(); }
    bool empty() const { return concepts_.empty(); }

    bool operator==(const HolMeMap& other) const { return concepts_ == other.concepts_; }

private:
    std::vector<Concept> concepts_;
    std::map<std::string, std::size_t, std::less<>> index_;
};

// Parses and validates a KB document. Throws ParseError on malformed JSON or
// schema violations and ValidationError on dangling/cyclic references.
HolMeMap load_kb(std::string_view document);
HolMeMap load_kb_file(const std::string& path);
std::string serialize_kb(const HolMeMap& kb);

// Visible parts not contained in any other listed part, in input order.
std::vector<std::string> filter_hyper_meronyms(const std::vector<PartEntry>& parts);

// Part list for a concept, falling back to the first hypernym with parts.
std::vector<std::string> resolve_parts(std::string_view concept_id, const HolMeMap& kb);

// Locates a bundled KB ("pascal", "imagenet") or returns the argument as a path.
std::string bundled_kb_path(std::string_view name_or_path);

}  // namespace holmes::kb
