#pragma once

#include "newsie/clauses.hpp"
#include "newsie/depmodel.hpp"
#include "newsie/error.hpp"
#include "newsie/extractor.hpp"
#include "newsie/gcn.hpp"
#include "newsie/kb.hpp"
#include "newsie/matrix.hpp"
#include "newsie/pipeline.hpp"
#include "newsie/t2g.hpp"
#include "newsie/text.hpp"
