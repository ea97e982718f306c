/*
 * Copyright 2026 The TagForge Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "tagforge/caption_parser.hpp"
#include "tagforge/clustering.hpp"
#include "tagforge/common.hpp"
#include "tagforge/config.hpp"
#include "tagforge/data_engine.hpp"
#include "tagforge/embedding_store.hpp"
#include "tagforge/engine.hpp"
#include "tagforge/label_system.hpp"
#include "tagforge/lexicon.hpp"
#include "tagforge/metrics.hpp"
#include "tagforge/parallel.hpp"
#include "tagforge/rng.hpp"
#include "tagforge/selftest.hpp"
#include "tagforge/similarity_tagger.hpp"
