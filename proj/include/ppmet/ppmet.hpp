#pragma once

#include "ppmet/assignment.hpp"
#include "ppmet/cluster.hpp"
#include "ppmet/error.hpp"
#include "ppmet/fuse.hpp"
#include "ppmet/ingest.hpp"
#include "ppmet/rng.hpp"
#include "ppmet/score.hpp"
#include "ppmet/simkit.hpp"
#include "ppmet/timeline.hpp"
#include "ppmet/tsvad_post.hpp"
#include "ppmet/types.hpp"
#include "ppmet/windowing.hpp"
