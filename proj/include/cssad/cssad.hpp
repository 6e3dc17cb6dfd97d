#pragma once

#include "cssad/core.hpp"
#include "cssad/css.hpp"
#include "cssad/diarize.hpp"
#include "cssad/io.hpp"
#include "cssad/kmeans.hpp"
#include "cssad/metrics.hpp"
#include "cssad/mixgen.hpp"
#include "cssad/pipeline.hpp"
#include "cssad/transcript.hpp"
#include "cssad/vad.hpp"
