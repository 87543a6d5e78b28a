use std::sync::Arc;
use std::thread;

use scenelayout::decoder::EegEpoch;
use scenelayout::session::{EpochWindow, EventClient, EventServer, Message, PerfectDecoder, RingBuffer, SharedRingBuffer};

fn server(window: EpochWindow) -> (EventServer, SharedRingBuffer) {
    let buffer = SharedRingBuffer::new(RingBuffer::new(12, 4000, 500.0).unwrap());
    let server = EventServer::bind("127.0.0.1:0", buffer.clone(), Arc::new(PerfectDecoder), window).unwrap();
    (server, buffer)
}

fn write_seconds(buffer: &SharedRingBuffer, seconds: f64) {
    let n = (seconds * 500.0) as usize;
    buffer.append_chunk(&EegEpoch::zeros(12, n, 500.0).unwrap()).unwrap();
}

#[test]
fn malformed_lines_keep_the_connection_open() {
    let (server, buffer) = server(EpochWindow::ONLINE);
    let mut client = EventClient::connect(server.local_addr()).unwrap();
    client.send_line("HELLO").unwrap();
    assert_eq!(client.receive().unwrap(), Message::Error("malformed".into()));
    client.send_line("START x 1 0").unwrap();
    assert_eq!(client.receive().unwrap(), Message::Error("malformed".into()));
    write_seconds(&buffer, 3.0);
    assert_eq!(client.run_trial(1, 4, 0, 1500).unwrap(), 4);
}

#[test]
fn epoch_not_yet_recorded_is_reported() {
    let (server, buffer) = server(EpochWindow::OFFLINE);
    let mut client = EventClient::connect(server.local_addr()).unwrap();
    write_seconds(&buffer, 1.0);
    client.send(&Message::start(1, 0, 0)).unwrap();
    client.send(&Message::end(1, 500)).unwrap();
    assert_eq!(client.receive().unwrap(), Message::Error("epoch_unavailable".into()));
}

#[test]
fn connections_are_served_concurrently() {
    let buffer = SharedRingBuffer::new(RingBuffer::new(12, 40_000, 500.0).unwrap());
    let server = EventServer::bind("127.0.0.1:0", buffer.clone(), Arc::new(PerfectDecoder), EpochWindow::ONLINE).unwrap();
    let addr = server.local_addr();
    let handles: Vec<_> = (0..4u64)
        .map(|c| {
            let buffer = buffer.clone();
            thread::spawn(move || {
                let mut client = EventClient::connect(addr).unwrap();
                (0..25u64)
                    .map(|i| {
                        let target = ((c + i) % 6) as usize;
                        let start = buffer.counter();
                        write_seconds(&buffer, 3.0);
                        client.run_trial(c * 100 + i, target, start, buffer.counter()).unwrap() == target
                    })
                    .filter(|&ok| ok)
                    .count()
            })
        })
        .collect();
    let total: usize = handles.into_iter().map(|h| h.join().unwrap()).sum();
    assert_eq!(total, 100);
    assert!(server.is_running());
}
