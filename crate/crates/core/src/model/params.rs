use crate::ndmath::{Real, Tape, Tensor, Var};

use super::ModelError;

/// Model extents: vocabulary size, embedding width `E`, unidirectional hidden width `H`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub vocab: usize,
    pub embed: usize,
    pub hidden: usize,
}

impl Dims {
    pub fn new(vocab: usize, embed: usize, hidden: usize) -> Result<Self, ModelError> {
        if vocab == 0 || embed == 0 || hidden == 0 {
            return Err(ModelError::Shape(format!(
                "dimensions must be positive (vocab {vocab}, embed {embed}, hidden {hidden})"
            )));
        }
        Ok(Dims {
            vocab,
            embed,
            hidden,
        })
    }
}

/// One GRU direction. Input matrices are `E×H`, recurrent `H×H`, biases length `H`.
#[derive(Clone, Debug, PartialEq)]
pub struct GruWeights<T> {
    pub w_z: Tensor<T>,
    pub w_r: Tensor<T>,
    pub w_h: Tensor<T>,
    pub u_z: Tensor<T>,
    pub u_r: Tensor<T>,
    pub u_h: Tensor<T>,
    pub b_z: Tensor<T>,
    pub b_r: Tensor<T>,
    pub b_h: Tensor<T>,
}

const GRU_FIELDS: [&str; 9] = [
    "w_z", "w_r", "w_h", "u_z", "u_r", "u_h", "b_z", "b_r", "b_h",
];

impl<T: Real> GruWeights<T> {
    pub fn zeros(embed: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(vec![embed, hidden]);
        let u = || Tensor::zeros(vec![hidden, hidden]);
        let b = || Tensor::zeros(vec![hidden]);
        GruWeights {
            w_z: w(),
            w_r: w(),
            w_h: w(),
            u_z: u(),
            u_r: u(),
            u_h: u(),
            b_z: b(),
            b_r: b(),
            b_h: b(),
        }
    }

    fn fields(&self) -> [&Tensor<T>; 9] {
        [
            &self.w_z, &self.w_r, &self.w_h, &self.u_z, &self.u_r, &self.u_h, &self.b_z, &self.b_r,
            &self.b_h,
        ]
    }

    fn fields_mut(&mut self) -> [&mut Tensor<T>; 9] {
        [
            &mut self.w_z,
            &mut self.w_r,
            &mut self.w_h,
            &mut self.u_z,
            &mut self.u_r,
            &mut self.u_h,
            &mut self.b_z,
            &mut self.b_r,
            &mut self.b_h,
        ]
    }

    pub fn recurrent(&self) -> [&Tensor<T>; 3] {
        [&self.u_z, &self.u_r, &self.u_h]
    }

    pub fn input(&self) -> [&Tensor<T>; 3] {
        [&self.w_z, &self.w_r, &self.w_h]
    }

    pub fn biases(&self) -> [&Tensor<T>; 3] {
        [&self.b_z, &self.b_r, &self.b_h]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BiGru<T> {
    pub forward: GruWeights<T>,
    pub backward: GruWeights<T>,
}

impl<T: Real> BiGru<T> {
    pub fn zeros(embed: usize, hidden: usize) -> Self {
        BiGru {
            forward: GruWeights::zeros(embed, hidden),
            backward: GruWeights::zeros(embed, hidden),
        }
    }
}

/// All trainable parameters: the embedding table and the document and query encoders.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams<T> {
    pub dims: Dims,
    pub embedding: Tensor<T>,
    pub doc_encoder: BiGru<T>,
    pub query_encoder: BiGru<T>,
}

impl<T: Real> ModelParams<T> {
    pub fn zeros(dims: Dims) -> Self {
        ModelParams {
            dims,
            embedding: Tensor::zeros(vec![dims.vocab, dims.embed]),
            doc_encoder: BiGru::zeros(dims.embed, dims.hidden),
            query_encoder: BiGru::zeros(dims.embed, dims.hidden),
        }
    }

    fn directions(&self) -> [(&'static str, &GruWeights<T>); 4] {
        [
            ("doc.fwd", &self.doc_encoder.forward),
            ("doc.bwd", &self.doc_encoder.backward),
            ("query.fwd", &self.query_encoder.forward),
            ("query.bwd", &self.query_encoder.backward),
        ]
    }

    /// Parameter tensors in their fixed serialization order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = vec![("embedding".to_string(), &self.embedding)];
        for (prefix, gru) in self.directions() {
            for (field, t) in GRU_FIELDS.iter().zip(gru.fields()) {
                out.push((format!("{prefix}.{field}"), t));
            }
        }
        out
    }

    pub fn names(&self) -> Vec<String> {
        self.named_tensors().into_iter().map(|(n, _)| n).collect()
    }

    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = vec![&mut self.embedding];
        for gru in [
            &mut self.doc_encoder.forward,
            &mut self.doc_encoder.backward,
            &mut self.query_encoder.forward,
            &mut self.query_encoder.backward,
        ] {
            out.extend(gru.fields_mut());
        }
        out
    }

    pub fn gru_weights(&self) -> Vec<(&'static str, &GruWeights<T>)> {
        self.directions().to_vec()
    }

    /// Builds parameters from tensors given in [`Self::named_tensors`] order.
    pub fn from_named(dims: Dims, tensors: Vec<(String, Tensor<T>)>) -> Result<Self, ModelError> {
        let mut params = Self::zeros(dims);
        let expected = params.names();
        if tensors.len() != expected.len() {
            return Err(ModelError::Shape(format!(
                "expected {} tensors, got {}",
                expected.len(),
                tensors.len()
            )));
        }
        for ((slot, name), (got_name, t)) in
            params.tensors_mut().into_iter().zip(&expected).zip(tensors)
        {
            if &got_name != name {
                return Err(ModelError::Shape(format!(
                    "expected tensor {name}, found {got_name}"
                )));
            }
            if slot.shape() != t.shape() {
                return Err(ModelError::Shape(format!(
                    "{name}: expected shape {:?}, found {:?}",
                    slot.shape(),
                    t.shape()
                )));
            }
            *slot = t;
        }
        Ok(params)
    }

    pub fn cast<U: Real>(&self) -> ModelParams<U> {
        let named = self
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.cast()))
            .collect();
        ModelParams::from_named(self.dims, named).expect("same layout")
    }

    pub fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.numel()).sum()
    }
}

#[derive(Clone, Copy, Debug)]
pub struct GruVars {
    pub w_z: Var,
    pub w_r: Var,
    pub w_h: Var,
    pub u_z: Var,
    pub u_r: Var,
    pub u_h: Var,
    pub b_z: Var,
    pub b_r: Var,
    pub b_h: Var,
}

#[derive(Clone, Copy, Debug)]
pub struct BiGruVars {
    pub forward: GruVars,
    pub backward: GruVars,
}

/// Parameters registered on a tape.
#[derive(Clone, Debug)]
pub struct ParamVars {
    pub embedding: Var,
    pub doc_encoder: BiGruVars,
    pub query_encoder: BiGruVars,
    order: Vec<Var>,
}

impl GruVars {
    pub fn register<T: Real>(tape: &mut Tape<T>, w: &GruWeights<T>, trainable: bool) -> Self {
        let mut reg = |t: &Tensor<T>| {
            if trainable {
                tape.param(t.clone())
            } else {
                tape.constant(t.clone())
            }
        };
        GruVars {
            w_z: reg(&w.w_z),
            w_r: reg(&w.w_r),
            w_h: reg(&w.w_h),
            u_z: reg(&w.u_z),
            u_r: reg(&w.u_r),
            u_h: reg(&w.u_h),
            b_z: reg(&w.b_z),
            b_r: reg(&w.b_r),
            b_h: reg(&w.b_h),
        }
    }

    fn all(&self) -> [Var; 9] {
        [
            self.w_z, self.w_r, self.w_h, self.u_z, self.u_r, self.u_h, self.b_z, self.b_r,
            self.b_h,
        ]
    }
}

impl ParamVars {
    pub fn register<T: Real>(tape: &mut Tape<T>, params: &ModelParams<T>, trainable: bool) -> Self {
        let embedding = if trainable {
            tape.param(params.embedding.clone())
        } else {
            tape.constant(params.embedding.clone())
        };
        let bi = |tape: &mut Tape<T>, b: &BiGru<T>| BiGruVars {
            forward: GruVars::register(tape, &b.forward, trainable),
            backward: GruVars::register(tape, &b.backward, trainable),
        };
        let doc_encoder = bi(tape, &params.doc_encoder);
        let query_encoder = bi(tape, &params.query_encoder);
        let mut order = vec![embedding];
        for g in [
            doc_encoder.forward,
            doc_encoder.backward,
            query_encoder.forward,
            query_encoder.backward,
        ] {
            order.extend(g.all());
        }
        ParamVars {
            embedding,
            doc_encoder,
            query_encoder,
            order,
        }
    }

    /// Inverse of [`Self::in_order`]: vars given in [`ModelParams::named_tensors`] order.
    pub fn from_vars(vars: &[Var]) -> Self {
        assert_eq!(vars.len(), 37, "expected one var per parameter tensor");
        let gru = |k: usize| {
            let v = &vars[1 + 9 * k..1 + 9 * (k + 1)];
            GruVars {
                w_z: v[0],
                w_r: v[1],
                w_h: v[2],
                u_z: v[3],
                u_r: v[4],
                u_h: v[5],
                b_z: v[6],
                b_r: v[7],
                b_h: v[8],
            }
        };
        ParamVars {
            embedding: vars[0],
            doc_encoder: BiGruVars {
                forward: gru(0),
                backward: gru(1),
            },
            query_encoder: BiGruVars {
                forward: gru(2),
                backward: gru(3),
            },
            order: vars.to_vec(),
        }
    }

    /// Vars in [`ModelParams::named_tensors`] order.
    pub fn in_order(&self) -> &[Var] {
        &self.order
    }
}
