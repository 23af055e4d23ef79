//! Signed chain-of-custody envelopes for fee-carrying transactions.
//!
//! The payer issues one signed record per seed carrying the fee `f` and
//! the almost-uniform parameters `(beta, H)`. Every forward appends a hop
//! signed by the sender over the transaction id, all earlier hops and the
//! receiver's key, so a node cannot drop its predecessors. Settlement pays
//! `floor(f * r(j, h))` to the identity at chain position `j`.

mod codec;
mod signer;

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::ToPrimitive;
use serde_json::json;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::rational::{self, Rational};
use crate::schemes::{make_almost_uniform, RewardTable};
use codec::{Reader, Writer};

pub use signer::{derive_secret, secret_from_seed, InsecureHashSigner, PublicKey, SecretKey, Signature, SignatureScheme};

const MAGIC: &[u8; 4] = b"PICE";
const VERSION: u8 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CustodyError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("sender is not the custody head")]
    NotCustodyHead,
    #[error("broken link at hop {hop}: sender is not the previous receiver")]
    BrokenLink { hop: usize },
    #[error("bad signature on {0}")]
    BadSignature(String),
    #[error("first sender is not a seed of the record")]
    UnknownSeed,
    #[error("transaction id does not match the record")]
    TxIdMismatch,
    #[error("authorization claim is not by the custody head")]
    AuthorizerMismatch,
    #[error("chain of length {h} exceeds the horizon {horizon}")]
    ChainTooLong { h: u32, horizon: u32 },
    #[error("decode error: {0}")]
    Decode(String),
}

type Result<T> = std::result::Result<T, CustodyError>;

/// Everything the payer fixes except the seeds.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxParams {
    pub payee: PublicKey,
    pub amount: u64,
    pub fee: u64,
    pub beta: Rational,
    pub horizon: u32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransactionRecord {
    pub tx_id: [u8; 32],
    pub payer: PublicKey,
    pub payee: PublicKey,
    pub amount: u64,
    pub fee: u64,
    /// Reduced, with a positive denominator.
    pub beta: (i64, i64),
    pub horizon: u32,
    pub seeds: Vec<PublicKey>,
    pub payer_signature: Signature,
}

impl TransactionRecord {
    fn write_body(&self, w: &mut Writer) {
        w.bytes(&self.payer.0);
        w.bytes(&self.payee.0);
        w.u64(self.amount);
        w.u64(self.fee);
        w.i64(self.beta.0);
        w.i64(self.beta.1);
        w.u32(self.horizon);
        w.u32(self.seeds.len() as u32);
        for s in &self.seeds {
            w.bytes(&s.0);
        }
    }

    fn body(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.raw(b"PICE-record");
        self.write_body(&mut w);
        w.buf
    }

    fn compute_tx_id(&self) -> [u8; 32] {
        Sha256::digest(self.body()).into()
    }

    pub fn beta(&self) -> Rational {
        rational::ratio(self.beta.0, self.beta.1)
    }

    /// The `(beta, H)`-almost-uniform table the record commits to.
    pub fn table(&self) -> RewardTable {
        make_almost_uniform(self.beta(), self.horizon).expect("validated record parameters")
    }

    pub fn verify<S: SignatureScheme>(&self, scheme: &S) -> Result<()> {
        if self.compute_tx_id() != self.tx_id {
            return Err(CustodyError::TxIdMismatch);
        }
        if !scheme.verify(&self.payer, &self.body(), &self.payer_signature) {
            return Err(CustodyError::BadSignature("transaction record".into()));
        }
        Ok(())
    }

    fn write(&self, w: &mut Writer) {
        w.raw(&self.tx_id);
        self.write_body(w);
        w.bytes(&self.payer_signature.0);
    }

    fn read(r: &mut Reader<'_>) -> Result<Self> {
        let tx_id: [u8; 32] = r.raw(32)?.try_into().expect("32 bytes");
        let payer = PublicKey(r.bytes()?);
        let payee = PublicKey(r.bytes()?);
        let amount = r.u64()?;
        let fee = r.u64()?;
        let beta = (r.i64()?, r.i64()?);
        if beta.0 <= 0 || beta.1 <= 0 || num_integer::gcd(beta.0, beta.1) != 1 {
            return Err(CustodyError::Decode(format!("beta {}/{} is not positive and reduced", beta.0, beta.1)));
        }
        let horizon = r.u32()?;
        if horizon == 0 {
            return Err(CustodyError::Decode("horizon 0".into()));
        }
        let n = r.count(4)?;
        let seeds = (0..n).map(|_| r.bytes().map(PublicKey)).collect::<Result<_>>()?;
        let payer_signature = Signature(r.bytes()?);
        Ok(Self {
            tx_id,
            payer,
            payee,
            amount,
            fee,
            beta,
            horizon,
            seeds,
            payer_signature,
        })
    }
}

/// One signed record per seed, each naming only that seed.
pub fn init_transaction<S: SignatureScheme>(
    scheme: &S,
    payer: &SecretKey,
    params: &TxParams,
    seeds: &[PublicKey],
) -> Result<Vec<TransactionRecord>> {
    if !rational::is_positive(&params.beta) {
        return Err(CustodyError::InvalidParameter("beta must be positive".into()));
    }
    let beta = (params.beta.numer().to_i64(), params.beta.denom().to_i64());
    let (Some(num), Some(den)) = beta else {
        return Err(CustodyError::InvalidParameter("beta does not fit in 64-bit parts".into()));
    };
    if params.horizon == 0 {
        return Err(CustodyError::InvalidParameter("horizon must be at least 1".into()));
    }
    if seeds.is_empty() {
        return Err(CustodyError::InvalidParameter("need at least one seed".into()));
    }
    let payer_pk = scheme.public_key(payer);
    Ok(seeds
        .iter()
        .map(|seed| {
            let mut rec = TransactionRecord {
                tx_id: [0; 32],
                payer: payer_pk.clone(),
                payee: params.payee.clone(),
                amount: params.amount,
                fee: params.fee,
                beta: (num, den),
                horizon: params.horizon,
                seeds: vec![seed.clone()],
                payer_signature: Signature(Vec::new()),
            };
            rec.tx_id = rec.compute_tx_id();
            rec.payer_signature = scheme.sign(payer, &rec.body());
            rec
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Hop {
    pub sender: PublicKey,
    pub receiver: PublicKey,
    pub signature: Signature,
}

fn write_hops(w: &mut Writer, hops: &[Hop]) {
    w.u32(hops.len() as u32);
    for h in hops {
        w.bytes(&h.sender.0);
        w.bytes(&h.receiver.0);
        w.bytes(&h.signature.0);
    }
}

/// Bytes a sender signs: transaction id, every earlier hop, receiver key.
fn hop_message(tx_id: &[u8; 32], prior: &[Hop], receiver: &PublicKey) -> Vec<u8> {
    let mut w = Writer::default();
    w.raw(b"PICE-hop");
    w.raw(tx_id);
    write_hops(&mut w, prior);
    w.bytes(&receiver.0);
    w.buf
}

/// Carried along but not validated here.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuthorizationClaim {
    pub authorizer: PublicKey,
    pub proof: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CustodyEnvelope {
    pub record: TransactionRecord,
    pub hops: Vec<Hop>,
    pub claim: Option<AuthorizationClaim>,
}

impl CustodyEnvelope {
    pub fn new(record: TransactionRecord) -> Self {
        Self {
            record,
            hops: Vec::new(),
            claim: None,
        }
    }

    /// The current holder: the last receiver, or the record's only seed.
    pub fn head(&self) -> Option<&PublicKey> {
        match self.hops.last() {
            Some(h) => Some(&h.receiver),
            None if self.record.seeds.len() == 1 => self.record.seeds.first(),
            None => None,
        }
    }

    /// Identities from the seed down to the head.
    pub fn identities(&self) -> Vec<PublicKey> {
        match self.hops.first() {
            Some(first) => std::iter::once(first.sender.clone())
                .chain(self.hops.iter().map(|h| h.receiver.clone()))
                .collect(),
            None => self
                .claim
                .as_ref()
                .map(|c| c.authorizer.clone())
                .or_else(|| self.head().cloned())
                .into_iter()
                .collect(),
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.raw(MAGIC);
        w.u8(VERSION);
        self.record.write(&mut w);
        write_hops(&mut w, &self.hops);
        match &self.claim {
            None => w.u8(0),
            Some(c) => {
                w.u8(1);
                w.bytes(&c.authorizer.0);
                w.bytes(&c.proof);
            }
        }
        w.buf
    }

    /// Strict inverse of [`encode`](Self::encode): any input it accepts
    /// re-encodes to the same bytes.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.raw(4)? != MAGIC {
            return Err(CustodyError::Decode("bad magic".into()));
        }
        let version = r.u8()?;
        if version != VERSION {
            return Err(CustodyError::Decode(format!("unsupported version {version}")));
        }
        let record = TransactionRecord::read(&mut r)?;
        let n = r.count(12)?;
        let mut hops = Vec::with_capacity(n);
        for _ in 0..n {
            hops.push(Hop {
                sender: PublicKey(r.bytes()?),
                receiver: PublicKey(r.bytes()?),
                signature: Signature(r.bytes()?),
            });
        }
        let claim = match r.u8()? {
            0 => None,
            1 => Some(AuthorizationClaim {
                authorizer: PublicKey(r.bytes()?),
                proof: r.bytes()?,
            }),
            f => return Err(CustodyError::Decode(format!("bad claim flag {f}"))),
        };
        r.finish()?;
        Ok(Self { record, hops, claim })
    }

    /// Human-readable rendering with keys and signatures in hex.
    pub fn to_json(&self) -> serde_json::Value {
        let rec = &self.record;
        json!({
            "record": {
                "tx_id": hex::encode(rec.tx_id),
                "payer": rec.payer,
                "payee": rec.payee,
                "amount": rec.amount,
                "fee": rec.fee,
                "beta": format!("{}/{}", rec.beta.0, rec.beta.1),
                "horizon": rec.horizon,
                "seeds": rec.seeds,
                "payer_signature": rec.payer_signature,
            },
            "hops": self.hops.iter().map(|h| json!({
                "sender": h.sender,
                "receiver": h.receiver,
                "signature": h.signature,
            })).collect::<Vec<_>>(),
            "claim": self.claim.as_ref().map(|c| json!({
                "authorizer": c.authorizer,
                "proof": hex::encode(&c.proof),
            })),
        })
    }

    fn push_hop<S: SignatureScheme>(&mut self, scheme: &S, sender: &SecretKey, receiver: PublicKey) {
        let message = hop_message(&self.record.tx_id, &self.hops, &receiver);
        self.hops.push(Hop {
            sender: scheme.public_key(sender),
            receiver,
            signature: scheme.sign(sender, &message),
        });
    }

    fn require_head<S: SignatureScheme>(&self, scheme: &S, key: &SecretKey) -> Result<()> {
        if self.claim.is_some() {
            return Err(CustodyError::InvalidParameter("envelope is already claimed".into()));
        }
        let pk = scheme.public_key(key);
        let ok = match self.hops.last() {
            Some(h) => h.receiver == pk,
            None => self.record.seeds.contains(&pk),
        };
        if ok {
            Ok(())
        } else {
            Err(CustodyError::NotCustodyHead)
        }
    }

    fn fake_secret(&self, owner: &SecretKey) -> SecretKey {
        let mut label = self.record.tx_id.to_vec();
        label.extend_from_slice(&(self.hops.len() as u64).to_be_bytes());
        derive_secret(owner, &label)
    }
}

/// Passes the envelope to `receiver`, first inserting `fake_identities`
/// identities held by the sender.
pub fn forward<S: SignatureScheme>(
    scheme: &S,
    envelope: &CustodyEnvelope,
    sender: &SecretKey,
    receiver: &PublicKey,
    fake_identities: u32,
) -> Result<CustodyEnvelope> {
    let (mut env, current) = add_self_clones(scheme, envelope, sender, fake_identities)?;
    env.push_hop(scheme, &current, receiver.clone());
    Ok(env)
}

/// Appends `count` identities of the holder to the chain; the returned key
/// controls the new head.
pub fn add_self_clones<S: SignatureScheme>(
    scheme: &S,
    envelope: &CustodyEnvelope,
    holder: &SecretKey,
    count: u32,
) -> Result<(CustodyEnvelope, SecretKey)> {
    envelope.require_head(scheme, holder)?;
    let mut env = envelope.clone();
    let mut current = holder.clone();
    for _ in 0..count {
        let fake = env.fake_secret(holder);
        env.push_hop(scheme, &current, scheme.public_key(&fake));
        current = fake;
    }
    Ok((env, current))
}

/// Attaches an authorization claim by the custody head.
pub fn claim_authorization<S: SignatureScheme>(
    scheme: &S,
    envelope: &CustodyEnvelope,
    authorizer: &SecretKey,
    proof: Vec<u8>,
) -> Result<CustodyEnvelope> {
    envelope.require_head(scheme, authorizer)?;
    let mut env = envelope.clone();
    env.claim = Some(AuthorizationClaim {
        authorizer: scheme.public_key(authorizer),
        proof,
    });
    Ok(env)
}

/// Checks the record, every hop signature and link, and seed membership;
/// returns the identity-chain length `h = hops + 1`.
pub fn verify_chain<S: SignatureScheme>(scheme: &S, envelope: &CustodyEnvelope) -> Result<u32> {
    let record = &envelope.record;
    record.verify(scheme)?;
    let head = match envelope.hops.first() {
        None => match &envelope.claim {
            Some(c) if record.seeds.contains(&c.authorizer) => &c.authorizer,
            Some(_) => return Err(CustodyError::UnknownSeed),
            None => envelope.head().ok_or(CustodyError::UnknownSeed)?,
        },
        Some(first) => {
            if !record.seeds.contains(&first.sender) {
                return Err(CustodyError::UnknownSeed);
            }
            if let Some(i) = (1..envelope.hops.len()).find(|&i| envelope.hops[i].sender != envelope.hops[i - 1].receiver) {
                return Err(CustodyError::BrokenLink { hop: i });
            }
            for (i, hop) in envelope.hops.iter().enumerate() {
                let message = hop_message(&record.tx_id, &envelope.hops[..i], &hop.receiver);
                if !scheme.verify(&hop.sender, &message, &hop.signature) {
                    return Err(CustodyError::BadSignature(format!("hop {i}")));
                }
            }
            &envelope.hops.last().expect("non-empty").receiver
        }
    };
    if let Some(c) = &envelope.claim {
        if &c.authorizer != head {
            return Err(CustodyError::AuthorizerMismatch);
        }
    }
    Ok(envelope.hops.len() as u32 + 1)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Payout {
    /// 1 is the authorizer, `h` the seed.
    pub position: u32,
    pub key: PublicKey,
    pub amount: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Settlement {
    pub h: u32,
    pub payouts: Vec<Payout>,
}

impl Settlement {
    pub fn total(&self) -> u64 {
        self.payouts.iter().map(|p| p.amount).sum()
    }

    pub fn by_key(&self) -> BTreeMap<PublicKey, u64> {
        let mut out = BTreeMap::new();
        for p in &self.payouts {
            *out.entry(p.key.clone()).or_insert(0) += p.amount;
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        json!({
            "h": self.h,
            "total": self.total(),
            "payouts": self.payouts.iter().map(|p| json!({
                "position": p.position,
                "key": p.key,
                "amount": p.amount,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Settles with the record's own `(beta, H)` table.
pub fn settle<S: SignatureScheme>(scheme: &S, envelope: &CustodyEnvelope) -> Result<Settlement> {
    settle_with_table(scheme, envelope, &envelope.record.table())
}

/// Pays `floor(f * r(j, h))` to the identity at position `j`.
pub fn settle_with_table<S: SignatureScheme>(
    scheme: &S,
    envelope: &CustodyEnvelope,
    table: &RewardTable,
) -> Result<Settlement> {
    let h = verify_chain(scheme, envelope)?;
    if h > table.height() {
        return Err(CustodyError::ChainTooLong {
            h,
            horizon: table.height(),
        });
    }
    let fee = Rational::from_integer(BigInt::from(envelope.record.fee));
    let payouts = envelope
        .identities()
        .into_iter()
        .rev()
        .enumerate()
        .map(|(j, key)| {
            let position = j as u32 + 1;
            let amount = (&fee * table.get(position, h)).floor().to_integer();
            Payout {
                position,
                key,
                amount: amount.to_u64().expect("payout fits u64"),
            }
        })
        .collect();
    Ok(Settlement { h, payouts })
}
