//! Control arbitration: decides each tick whether a vehicle is driven by
//! its driver, by the stock cruise system, or by the experimental
//! controller.
//!
//! Experimental control requires four things at once: the driver has
//! engaged it, the server whitelists the vehicle, the server heartbeat is
//! fresh and the controller is still issuing commands. Losing any of them
//! drops the vehicle back to stock cruise (or to the driver) within the
//! same evaluation.

use serde::{Deserialize, Serialize};

use crate::dynamics::ArbitrationMode;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingConfig {
    #[serde(default = "TimingConfig::default_timeout")]
    pub heartbeat_timeout: f64,
    #[serde(default = "TimingConfig::default_timeout")]
    pub command_timeout: f64,
    /// When set, a heartbeat lapse during experimental control keeps the
    /// vehicle out of experimental mode until the driver re-engages.
    #[serde(default)]
    pub latch_on_heartbeat_lapse: bool,
}

impl TimingConfig {
    fn default_timeout() -> f64 {
        0.5
    }
}

impl Default for TimingConfig {
    fn default() -> Self {
        Self {
            heartbeat_timeout: 0.5,
            command_timeout: 0.5,
            latch_on_heartbeat_lapse: false,
        }
    }
}

/// `age` within `[0, timeout]`. NaN or negative ages count as stale.
#[inline]
pub fn is_fresh(age: f64, timeout: f64) -> bool {
    age >= 0.0 && age <= timeout
}

/// Stateless arbitration rule. Leaving experimental mode takes effect in the
/// same evaluation, and re-entry is allowed as soon as every predicate holds.
pub fn arbitrate(
    _current: ArbitrationMode,
    driver_engaged: bool,
    whitelisted: bool,
    heartbeat_age: f64,
    command_age: f64,
    cfg: &TimingConfig,
) -> ArbitrationMode {
    if !driver_engaged {
        return ArbitrationMode::Disengaged;
    }
    if whitelisted
        && is_fresh(heartbeat_age, cfg.heartbeat_timeout)
        && is_fresh(command_age, cfg.command_timeout)
    {
        ArbitrationMode::Experimental
    } else {
        ArbitrationMode::StockAcc
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArbitrationInputs {
    pub driver_engaged: bool,
    pub whitelisted: bool,
    pub heartbeat_age: f64,
    pub command_age: f64,
}

/// Per-vehicle arbitration state, adding the optional heartbeat latch on
/// top of [`arbitrate`].
#[derive(Debug, Clone, PartialEq)]
pub struct Arbiter {
    cfg: TimingConfig,
    mode: ArbitrationMode,
    latched: bool,
}

impl Arbiter {
    pub fn new(cfg: TimingConfig) -> Self {
        Self {
            cfg,
            mode: ArbitrationMode::Disengaged,
            latched: false,
        }
    }

    pub fn mode(&self) -> ArbitrationMode {
        self.mode
    }

    pub fn is_latched(&self) -> bool {
        self.latched
    }

    pub fn config(&self) -> &TimingConfig {
        &self.cfg
    }

    pub fn update(&mut self, inputs: ArbitrationInputs) -> ArbitrationMode {
        if !inputs.driver_engaged {
            self.latched = false;
        }
        let mut next = arbitrate(
            self.mode,
            inputs.driver_engaged,
            inputs.whitelisted,
            inputs.heartbeat_age,
            inputs.command_age,
            &self.cfg,
        );
        if self.cfg.latch_on_heartbeat_lapse
            && self.mode == ArbitrationMode::Experimental
            && inputs.driver_engaged
            && !is_fresh(inputs.heartbeat_age, self.cfg.heartbeat_timeout)
        {
            self.latched = true;
        }
        if self.latched && next == ArbitrationMode::Experimental {
            next = ArbitrationMode::StockAcc;
        }
        self.mode = next;
        next
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ArbitrationMode::*;

    const CFG: TimingConfig = TimingConfig {
        heartbeat_timeout: 0.5,
        command_timeout: 0.5,
        latch_on_heartbeat_lapse: false,
    };

    #[test]
    fn all_predicates_give_experimental() {
        assert_eq!(arbitrate(Disengaged, true, true, 0.0, 0.0, &CFG), Experimental);
    }

    #[test]
    fn stale_heartbeat_gives_stock() {
        assert_eq!(arbitrate(Experimental, true, true, 0.51, 0.0, &CFG), StockAcc);
    }

    #[test]
    fn stale_command_gives_stock() {
        assert_eq!(arbitrate(Experimental, true, true, 0.0, 0.6, &CFG), StockAcc);
    }

    #[test]
    fn not_whitelisted_gives_stock() {
        assert_eq!(arbitrate(Experimental, true, false, 0.0, 0.0, &CFG), StockAcc);
    }

    #[test]
    fn not_engaged_is_disengaged() {
        for wl in [false, true] {
            for hb in [0.0, 10.0] {
                assert_eq!(arbitrate(Experimental, false, wl, hb, hb, &CFG), Disengaged);
            }
        }
    }

    #[test]
    fn boundary_age_is_fresh() {
        assert_eq!(arbitrate(StockAcc, true, true, 0.5, 0.5, &CFG), Experimental);
        assert_eq!(arbitrate(StockAcc, true, true, -0.1, 0.0, &CFG), StockAcc);
        assert_eq!(arbitrate(StockAcc, true, true, f64::NAN, 0.0, &CFG), StockAcc);
    }

    #[test]
    fn auto_recover_after_lapse() {
        let mut a = Arbiter::new(CFG);
        let ok = ArbitrationInputs {
            driver_engaged: true,
            whitelisted: true,
            heartbeat_age: 0.0,
            command_age: 0.0,
        };
        assert_eq!(a.update(ok), Experimental);
        assert_eq!(a.update(ArbitrationInputs { heartbeat_age: 2.0, ..ok }), StockAcc);
        assert_eq!(a.update(ok), Experimental);
    }

    #[test]
    fn latch_requires_reengage() {
        let mut a = Arbiter::new(TimingConfig {
            latch_on_heartbeat_lapse: true,
            ..CFG
        });
        let ok = ArbitrationInputs {
            driver_engaged: true,
            whitelisted: true,
            heartbeat_age: 0.0,
            command_age: 0.0,
        };
        assert_eq!(a.update(ok), Experimental);
        assert_eq!(a.update(ArbitrationInputs { heartbeat_age: 2.0, ..ok }), StockAcc);
        assert!(a.is_latched());
        assert_eq!(a.update(ok), StockAcc);
        assert_eq!(a.update(ArbitrationInputs { driver_engaged: false, ..ok }), Disengaged);
        assert_eq!(a.update(ok), Experimental);
    }

    #[test]
    fn whitelist_revoke_does_not_latch() {
        let mut a = Arbiter::new(TimingConfig {
            latch_on_heartbeat_lapse: true,
            ..CFG
        });
        let ok = ArbitrationInputs {
            driver_engaged: true,
            whitelisted: true,
            heartbeat_age: 0.0,
            command_age: 0.0,
        };
        a.update(ok);
        assert_eq!(a.update(ArbitrationInputs { whitelisted: false, ..ok }), StockAcc);
        assert_eq!(a.update(ok), Experimental);
    }
}
