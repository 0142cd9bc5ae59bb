// Copyright (C) 2026 The APCE Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>

#include "apce/textpipe.h"

namespace apce {

/// What the chunk buffer needs from a K/V store when it applies a replacement plan.
class KvBackend {
public:
    virtual ~KvBackend() = default;

    virtual void evict(ChunkIndex chunk) = 0;

    /// Builds K/V for `chunks` (ascending) in document order, each attending over the
    /// resident chunks that precede it. Chunks already resident are rebuilt in place.
    virtual void load(std::span<const ChunkIndex> chunks) = 0;
};

}  // namespace apce
