#pragma once

#include "reprstruct/analysis.hpp"
#include "reprstruct/batch.hpp"
#include "reprstruct/error.hpp"
#include "reprstruct/estimator.hpp"
#include "reprstruct/ingestion.hpp"
#include "reprstruct/labelsets.hpp"
#include "reprstruct/measures.hpp"
#include "reprstruct/parallel.hpp"
#include "reprstruct/report_io.hpp"
#include "reprstruct/synth.hpp"
