#pragma once

#include "maptter/annotation.hpp"
#include "maptter/arabic_text.hpp"
#include "maptter/classifiers.hpp"
#include "maptter/corpus_store.hpp"
#include "maptter/cycle_engine.hpp"
#include "maptter/error.hpp"
#include "maptter/evaluation.hpp"
#include "maptter/experiment_config.hpp"
#include "maptter/featurization.hpp"
#include "maptter/labels.hpp"
#include "maptter/round_runner.hpp"
#include "maptter/service.hpp"
#include "maptter/workbench.hpp"
