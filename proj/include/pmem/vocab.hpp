#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "pmem/common.hpp"

namespace pmem {

// Token <-> id map. Ids 0 and 1 are reserved for padding and unknowns; real
// tokens start at 2. Ids are assigned in insertion order, which makes the
// map fully determined by the id_to_token vector.
class VocabMap {
public:
    static constexpr int32_t kPad = 0;
    static constexpr int32_t kUnk = 1;

    static VocabMap with_reserved() {
        VocabMap v;
        v.add("<pad>");
        v.add("<unk>");
        return v;
    }

    int32_t add(const std::string& token) {
        auto it = token_to_id_.find(token);
        if (it != token_to_id_.end()) return it->second;
        int32_t id = static_cast<int32_t>(id_to_token_.size());
        id_to_token_.push_back(token);
        token_to_id_.emplace(token, id);
        return id;
    }

    int32_t lookup(const std::string& token) const {
        auto it = token_to_id_.find(token);
        return it == token_to_id_.end() ? kUnk : it->second;
    }

    bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

    const std::string& token(int32_t id) const {
        if (id < 0 || id >= static_cast<int32_t>(id_to_token_.size()))
            fail("vocab", "id ", id, " out of range (size ", id_to_token_.size(), ")");
        return id_to_token_[static_cast<size_t>(id)];
    }

    int64_t size() const { return static_cast<int64_t>(id_to_token_.size()); }
    const std::vector<std::string>& tokens() const { return id_to_token_; }

    static VocabMap from_tokens(const std::vector<std::string>& toks) {
        VocabMap v;
        for (const auto& t : toks) v.add(t);
        if (v.size() < 2 || v.id_to_token_[0] != "<pad>" || v.id_to_token_[1] != "<unk>")
            fail("vocab", "token list must start with <pad>, <unk>");
        return v;
    }

private:
    std::vector<std::string> id_to_token_;
    std::unordered_map<std::string, int32_t> token_to_id_;
};

}  // namespace pmem
