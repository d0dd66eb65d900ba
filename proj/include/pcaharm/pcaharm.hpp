#pragma once

#include "pcaharm/common.hpp"
#include "pcaharm/evaluate.hpp"
#include "pcaharm/experiment.hpp"
#include "pcaharm/image.hpp"
#include "pcaharm/ingest.hpp"
#include "pcaharm/manifest.hpp"
#include "pcaharm/metrics.hpp"
#include "pcaharm/pca.hpp"
#include "pcaharm/pipeline.hpp"
#include "pcaharm/png_io.hpp"
#include "pcaharm/stats.hpp"
#include "pcaharm/table2_fixture.hpp"
