use super::{ConditionalTable, LatentTreeModel, Variable};
use crate::{Error, Result};

/// One latent root whose children are all observed: variable 0 is the
/// latent, variables `1..=k` the children in ascending column order.
#[derive(Debug, Clone, PartialEq)]
pub struct Category {
    model: LatentTreeModel,
}

impl Category {
    pub fn new(model: LatentTreeModel) -> Result<Self> {
        let n = model.n_vars();
        if n < 2 {
            return Err(Error::invalid(
                "a category needs a latent and at least one observed child",
            ));
        }
        if !model.variable(0).is_latent() || model.parent(0).is_some() {
            return Err(Error::invalid(
                "category variable 0 must be the latent root",
            ));
        }
        let mut prev = None;
        for v in 1..n {
            let col = model
                .variable(v)
                .column()
                .ok_or_else(|| Error::invalid("category children must be observed"))?;
            if model.parent(v) != Some(0) {
                return Err(Error::invalid(
                    "category children must hang under the latent",
                ));
            }
            if prev.is_some_and(|p| p >= col) {
                return Err(Error::invalid(
                    "category children must be in ascending column order",
                ));
            }
            prev = Some(col);
        }
        Ok(Category { model })
    }

    /// Builds from a prior `P(Z=1)` and `(column, [P(x=1|Z=0), P(x=1|Z=1)])`.
    pub fn from_parts(level: u32, prior: f64, children: &[(usize, [f64; 2])]) -> Result<Self> {
        let mut children = children.to_vec();
        children.sort_by_key(|c| c.0);
        let mut vars = vec![Variable::latent(level)];
        let mut parent = vec![None];
        let mut tables = vec![ConditionalTable::Root { p1: prior }];
        for (c, p1) in children {
            vars.push(Variable::observed(c, level.saturating_sub(1)));
            parent.push(Some(0));
            tables.push(ConditionalTable::Edge { p1 });
        }
        Category::new(LatentTreeModel::new(vars, parent, tables)?)
    }

    /// Rebuilds a category from a model whose variable 0 is a latent root,
    /// keeping only its observed children (sorted by column).
    pub(crate) fn from_latent_root(model: &LatentTreeModel) -> Result<Self> {
        let prior = model.table(0).prob(1, 0);
        let children: Vec<(usize, [f64; 2])> = model
            .children(0)
            .iter()
            .filter_map(|&v| {
                model
                    .variable(v)
                    .column()
                    .map(|c| (c, [model.table(v).prob(1, 0), model.table(v).prob(1, 1)]))
            })
            .collect();
        let mut cat = Category::from_parts(model.variable(0).level, prior, &children)?;
        cat.model.set_label(0, model.variable(0).label.clone());
        Ok(cat)
    }

    pub fn model(&self) -> &LatentTreeModel {
        &self.model
    }

    pub fn into_model(self) -> LatentTreeModel {
        self.model
    }

    pub fn len(&self) -> usize {
        self.model.n_vars() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn level(&self) -> u32 {
        self.model.variable(0).level
    }

    /// `P(Z = 1)`.
    pub fn prior(&self) -> f64 {
        self.model.table(0).prob(1, 0)
    }

    /// Data columns of the children, ascending.
    pub fn columns(&self) -> Vec<usize> {
        (1..self.model.n_vars())
            .map(|v| self.model.variable(v).column().unwrap())
            .collect()
    }

    pub fn child_var(&self, column: usize) -> Option<usize> {
        (1..self.model.n_vars()).find(|&v| self.model.variable(v).column() == Some(column))
    }

    /// `[P(x=1|Z=0), P(x=1|Z=1)]` for the child bound to `column`.
    pub fn child_table(&self, column: usize) -> Option<[f64; 2]> {
        self.child_var(column).map(|v| {
            [
                self.model.table(v).prob(1, 0),
                self.model.table(v).prob(1, 1),
            ]
        })
    }

    /// Sets the latent's level (children move to `level - 1`).
    pub fn with_level(mut self, level: u32) -> Self {
        let vars: Vec<Variable> = self
            .model
            .variables()
            .iter()
            .enumerate()
            .map(|(v, var)| Variable {
                level: if v == 0 {
                    level
                } else {
                    level.saturating_sub(1)
                },
                ..var.clone()
            })
            .collect();
        let parent = (0..self.model.n_vars())
            .map(|v| self.model.parent(v))
            .collect();
        self.model =
            LatentTreeModel::new(vars, parent, self.model.tables().to_vec()).expect("levels only");
        self
    }

    pub fn set_latent_label(&mut self, label: impl Into<String>) {
        self.model.set_label(0, Some(label.into()));
    }
}
