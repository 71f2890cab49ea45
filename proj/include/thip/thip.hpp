#ifndef THIP_THIP_HPP
#define THIP_THIP_HPP

#include "thip/config.hpp"
#include "thip/conformance.hpp"
#include "thip/discovery.hpp"
#include "thip/error.hpp"
#include "thip/eventlog.hpp"
#include "thip/extract.hpp"
#include "thip/gspo.hpp"
#include "thip/petri.hpp"
#include "thip/process_tree.hpp"
#include "thip/random.hpp"
#include "thip/remote_labeler.hpp"
#include "thip/reward.hpp"

#endif // THIP_THIP_HPP
