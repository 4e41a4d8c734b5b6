use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::model::base::{BaseModule, BaseOutput};
use crate::model::batch::Batch;
use crate::model::schema::{FeatureSchema, TowerConfig};
use crate::model::tower::Tower;
use crate::nn::{ParamId, ParamStore, Tape};
use crate::rng::stream;
use crate::tensor::Tensor;

pub const POSITION_TABLE: &str = "pos.emb";
pub const PAL_SEEN: &str = "pal.seen";
pub const TEACHER: &str = "teacher";
pub const STUDENT: &str = "student";

/// Which parts beyond the shared base module a network carries.
///
/// Towers are named by input: `teacher` sees `[h_s; e_p]`, `student` sees
/// `h_s` only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Components {
    pub position: bool,
    pub teacher: bool,
    pub student: bool,
    pub pal: bool,
}

#[derive(Debug, Clone)]
pub struct Network {
    pub schema: FeatureSchema,
    pub tower_config: TowerConfig,
    pub components: Components,
    pub base: BaseModule,
    pub position: Option<ParamId>,
    pub teacher: Option<Tower>,
    pub student: Option<Tower>,
    /// `[K, 1]` logits of the per-slot probability of being seen.
    pub pal_seen: Option<ParamId>,
}

impl Network {
    /// Fresh parameters. Each component draws from its own seeded stream, so
    /// the base module is bitwise identical across component sets.
    pub fn init(
        schema: &FeatureSchema,
        cfg: &TowerConfig,
        components: Components,
        seed: u64,
    ) -> Result<(Network, ParamStore)> {
        schema.validate()?;
        cfg.validate()?;
        let mut store = ParamStore::new();
        let base = BaseModule::register(&mut store, schema, cfg, &mut stream(seed, "init/base"))?;
        let position = if components.position {
            let d = schema.position_dim;
            Some(store.insert_uniform(
                POSITION_TABLE,
                vec![schema.position_vocab(), d],
                d,
                &mut stream(seed, "init/position"),
            )?)
        } else {
            None
        };
        let teacher = if components.teacher {
            Some(Tower::register(
                &mut store,
                TEACHER,
                cfg.teacher_input_dim(schema),
                cfg,
                &mut stream(seed, "init/teacher"),
            )?)
        } else {
            None
        };
        let student = if components.student {
            Some(Tower::register(
                &mut store,
                STUDENT,
                cfg.student_input_dim(schema),
                cfg,
                &mut stream(seed, "init/student"),
            )?)
        } else {
            None
        };
        let pal_seen = if components.pal {
            Some(store.insert(PAL_SEEN, Tensor::zeros(vec![schema.num_positions, 1]))?)
        } else {
            None
        };
        let net = Network {
            schema: schema.clone(),
            tower_config: cfg.clone(),
            components,
            base,
            position,
            teacher,
            student,
            pal_seen,
        };
        Ok((net, store))
    }

    /// Rebinds a network to loaded parameters. The store must hold exactly
    /// the expected names and shapes.
    pub fn bind(
        schema: &FeatureSchema,
        cfg: &TowerConfig,
        components: Components,
        store: &ParamStore,
    ) -> Result<Network> {
        let (_, expected) = Network::init(schema, cfg, components, 0)?;
        let want: BTreeMap<&str, &[usize]> = expected
            .ids()
            .map(|id| (expected.name(id), expected.value(id).shape()))
            .collect();
        for id in store.ids() {
            let name = store.name(id);
            match want.get(name) {
                None => return Err(Error::Artifact(format!("unknown parameter {name:?}"))),
                Some(shape) if *shape != store.value(id).shape() => {
                    return Err(Error::Artifact(format!(
                        "parameter {name:?} has shape {:?}, expected {shape:?}",
                        store.value(id).shape()
                    )))
                }
                Some(_) => {}
            }
        }
        if let Some(missing) = want.keys().find(|n| store.id(n).is_none()) {
            return Err(Error::Artifact(format!("missing parameter {missing:?}")));
        }
        Ok(Network {
            schema: schema.clone(),
            tower_config: cfg.clone(),
            components,
            base: BaseModule::lookup(store, schema, cfg)?,
            position: components.position.then(|| store.require(POSITION_TABLE)).transpose()?,
            teacher: components.teacher.then(|| Tower::lookup(store, TEACHER, cfg)).transpose()?,
            student: components.student.then(|| Tower::lookup(store, STUDENT, cfg)).transpose()?,
            pal_seen: components.pal.then(|| store.require(PAL_SEEN)).transpose()?,
        })
    }

    pub fn base_forward(&self, tape: &mut Tape, batch: &Batch) -> Result<BaseOutput> {
        self.base.forward(tape, batch)
    }

    pub fn teacher(&self) -> Result<(&Tower, ParamId)> {
        match (&self.teacher, self.position) {
            (Some(t), Some(p)) => Ok((t, p)),
            _ => Err(Error::contract("network has no position-aware tower")),
        }
    }

    pub fn student(&self) -> Result<&Tower> {
        self.student
            .as_ref()
            .ok_or_else(|| Error::contract("network has no position-free tower"))
    }
}
