//! Byte layout of the wire envelope and the size of a masked submission.

use mudpqfed::masking::{all_shares, mask_and_commit};
use mudpqfed::protocol::{Message, MessageKind, Submission, SERVER_ID};
use mudpqfed::transport::wire::{decode, encode, Envelope, VERSION};
use mudpqfed::{GroupParams, HypermeshTopology};

fn main() -> mudpqfed::Result<()> {
    let params = GroupParams::demo();
    let empty = Envelope {
        version: VERSION,
        tag: MessageKind::DropoutNotice.tag(),
        round: 3,
        sender: SERVER_ID,
        payload: Vec::new(),
    };
    println!(
        "empty envelope: {} bytes {:02x?}",
        empty.to_bytes().len(),
        empty.to_bytes()
    );

    let topo = HypermeshTopology::build(2, 2)?;
    let len = 12;
    let shares = all_shares(&topo, 1, 9, len, &params)?;
    let masked = mask_and_commit(&vec![1; len], &shares[0], &params)?;
    let msg = Message::Submission(Submission {
        masked,
        scales: vec![0.5],
    });
    let bytes = encode(&msg, 0, &params);
    let (sender, back) = decode(&bytes, &params)?;
    assert_eq!(back, msg);
    println!(
        "submission of {len} coordinates in {} groups: {} bytes ({}-byte scalars), from client {sender}",
        topo.n(),
        bytes.len(),
        params.width()
    );
    Ok(())
}
