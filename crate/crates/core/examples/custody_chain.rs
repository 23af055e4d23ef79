//! Building, verifying and settling a signed custody chain.

use propagation_incentives::custody::{
    claim_authorization, forward, init_transaction, secret_from_seed, settle, verify_chain, CustodyEnvelope,
    InsecureHashSigner, SignatureScheme, TxParams,
};
use propagation_incentives::rational::ratio;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // the hash signer is a placeholder and provides no security
    let s = InsecureHashSigner;
    let keys: Vec<_> = (1..=4).map(secret_from_seed).collect();
    let params = TxParams {
        payee: s.public_key(&secret_from_seed(100)),
        amount: 5_000,
        fee: 60,
        beta: ratio(1, 2),
        horizon: 6,
    };
    let record = init_transaction(&s, &secret_from_seed(99), &params, &[s.public_key(&keys[0])])?.remove(0);
    let mut env = CustodyEnvelope::new(record);
    env = forward(&s, &env, &keys[0], &s.public_key(&keys[1]), 0)?;
    env = forward(&s, &env, &keys[1], &s.public_key(&keys[2]), 1)?;
    env = claim_authorization(&s, &env, &keys[2], b"block 1234".to_vec())?;

    let bytes = env.encode();
    let decoded = CustodyEnvelope::decode(&bytes)?;
    println!("{} bytes, chain length {}", bytes.len(), verify_chain(&s, &decoded)?);
    println!("{}", settle(&s, &decoded)?.to_json());

    let mut tampered = bytes.clone();
    tampered[20] ^= 1;
    let rejected = CustodyEnvelope::decode(&tampered).map(|e| verify_chain(&s, &e));
    println!("tampered: {rejected:?}");
    Ok(())
}
