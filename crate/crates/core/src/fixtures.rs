//! Small models shipped with the crate, used by the examples and tests.

/// Robot product line: a motor, one of three tools and an optional
/// protective grid. Motor power 10 can never be chosen.
pub const ROBOT: &str = r#"// robot product line
feature Robot {
    mandatory Motor {
        attr pwr in {10, 20, 30};
    }
    mandatory Tool {
        attr pwr_min abstract;
        alternative {
            Drill {
                attr pwr_min in {20};
            }
            Glue {
                attr pwr_min in {10};
            }
            Mill {
                attr pwr_min in {20};
            }
        }
    }
    optional Protective_grid {
        mandatory Mounting_set {}
    }
}

constraint(root, exist(Robot)).
constraint(min_motor_pow_plus_10_percent, Motor:pwr >= Tool:pwr_min * 110 / 100).
constraint(d_or_m_inc_pGrid, exist(Drill) \/ exist(Mill) ==> exist(Protective_grid)).
"#;

/// The robot line with the Glue tool removed: every remaining tool needs the
/// protective grid, which therefore becomes false optional.
pub const ROBOT_NO_GLUE: &str = r#"feature Robot {
    mandatory Motor {
        attr pwr in {10, 20, 30};
    }
    mandatory Tool {
        attr pwr_min abstract;
        alternative {
            Drill {
                attr pwr_min in {20};
            }
            Mill {
                attr pwr_min in {20};
            }
        }
    }
    optional Protective_grid {
        mandatory Mounting_set {}
    }
}

constraint(root, exist(Robot)).
constraint(min_motor_pow_plus_10_percent, Motor:pwr >= Tool:pwr_min * 110 / 100).
constraint(d_or_m_inc_pGrid, exist(Drill) \/ exist(Mill) ==> exist(Protective_grid)).
"#;

/// The robot line split into three modules.
pub const ROBOT_MODULAR: &str = r#"module Base {
    feature Robot {
        mandatory Motor {
            attr pwr in {10, 20, 30};
        }
        mandatory Tool;
        optional Protective_grid;
    }
    constraint(root, exist(Robot)).
    constraint(min_motor_pow_plus_10_percent, Motor:pwr >= Tool:pwr_min * 110 / 100).
}

module Tooling {
    feature Tool {
        attr pwr_min abstract;
        alternative {
            Drill {
                attr pwr_min in {20};
            }
            Glue {
                attr pwr_min in {10};
            }
            Mill {
                attr pwr_min in {20};
            }
        }
    }
    ref Tool:pwr_min;
    ref Drill;
    ref Mill;
}

module Safety {
    feature Protective_grid {
        mandatory Mounting_set {}
    }
    ref Protective_grid;
    constraint(d_or_m_inc_pGrid, exist(Drill) \/ exist(Mill) ==> exist(Protective_grid)).
}
"#;

/// A feature tree without cross-tree constraints.
pub const TREE_ONLY: &str = r#"feature Car {
    mandatory Engine {
        attr kw in {[50..54]};
    }
    optional Radio {}
    mandatory Body {
        alternative {
            Sedan {}
            Wagon {}
        }
    }
}
"#;
