#pragma once

#include "proppr/dataset.hpp"
#include "proppr/fact_index.hpp"
#include "proppr/grounder.hpp"
#include "proppr/learner.hpp"
#include "proppr/metrics.hpp"
#include "proppr/params.hpp"
#include "proppr/parser.hpp"
#include "proppr/pra.hpp"
#include "proppr/program.hpp"
#include "proppr/proof_graph.hpp"
#include "proppr/symbols.hpp"
#include "proppr/term.hpp"
#include "proppr/threading.hpp"
