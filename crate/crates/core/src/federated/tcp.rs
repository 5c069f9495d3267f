use std::io::{BufReader, BufWriter};
use std::net::{SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::thread;
use std::time::Duration;

use super::aggregate::ClientUpdate;
use super::checkpoint::{deserialize_checkpoint, serialize_checkpoint};
use super::runner::{pack_update, unpack_update, ClientTrainer, Coordinator, FedConfig, FedOutcome};
use super::wire::{read_message, write_message, WireMessage, DEFAULT_MAX_FRAME};
use crate::data::WindowedDataset;
use crate::error::{Error, Result};
use crate::model::ModelConfig;

struct Session {
    client: u32,
    samples: u64,
    reader: BufReader<TcpStream>,
    writer: BufWriter<TcpStream>,
}

impl Session {
    fn fail(&self, err: Error) -> Error {
        Error::ClientFailure {
            client: self.client,
            reason: err.to_string(),
        }
    }
}

/// Aggregation server for TCP clients.
pub struct FedServer {
    listener: TcpListener,
    max_frame: u64,
}

impl FedServer {
    pub fn bind(addr: impl ToSocketAddrs) -> Result<Self> {
        Ok(Self {
            listener: TcpListener::bind(addr)?,
            max_frame: DEFAULT_MAX_FRAME,
        })
    }

    pub fn with_max_frame(mut self, max_frame: u64) -> Self {
        self.max_frame = max_frame;
        self
    }

    pub fn local_addr(&self) -> Result<SocketAddr> {
        Ok(self.listener.local_addr()?)
    }

    fn accept_clients(&self, clients: usize) -> Result<Vec<Session>> {
        let mut sessions: Vec<Option<Session>> = (0..clients).map(|_| None).collect();
        for _ in 0..clients {
            let (stream, peer) = self.listener.accept()?;
            stream.set_nodelay(true)?;
            let mut reader = BufReader::new(stream.try_clone()?);
            let hello = read_message(&mut reader, self.max_frame)?;
            let WireMessage::Hello { client, samples } = hello else {
                return Err(Error::Protocol(format!("{peer} opened with {} instead of HELLO", hello.kind())));
            };
            let slot = sessions
                .get_mut(client as usize)
                .ok_or_else(|| Error::Protocol(format!("client id {client} outside 0..{clients}")))?;
            if slot.is_some() {
                return Err(Error::Protocol(format!("client id {client} connected twice")));
            }
            *slot = Some(Session {
                client,
                samples,
                reader,
                writer: BufWriter::new(stream),
            });
        }
        Ok(sessions.into_iter().map(|s| s.expect("every slot filled")).collect())
    }

    /// Accepts `fed.clients` connections, then runs `fed.rounds` synchronous
    /// rounds. Any client error aborts the run before aggregation.
    pub fn run(&self, fed: &FedConfig, model: &ModelConfig, test: &WindowedDataset) -> Result<FedOutcome> {
        let mut coord = Coordinator::new(fed, model, test)?;
        let mut sessions = self.accept_clients(fed.clients)?;
        for round in 0..fed.rounds as u32 {
            coord.begin_round();
            let blob = serialize_checkpoint(coord.global());
            for s in sessions.iter_mut() {
                let msg = WireMessage::Global {
                    round,
                    blob: blob.clone(),
                };
                write_message(&mut s.writer, &msg).map_err(|e| s.fail(e))?;
            }
            let mut updates = Vec::with_capacity(sessions.len());
            let mut losses = Vec::with_capacity(sessions.len());
            for s in sessions.iter_mut() {
                let (update, loss) = receive_update(s, round, self.max_frame).map_err(|e| s.fail(e))?;
                updates.push(update);
                losses.push(loss);
            }
            coord.finish_round(round, &updates, &losses)?;
        }
        for s in sessions.iter_mut() {
            write_message(&mut s.writer, &WireMessage::Done).map_err(|e| s.fail(e))?;
        }
        Ok(coord.finish())
    }
}

fn receive_update(s: &mut Session, round: u32, max_frame: u64) -> Result<(ClientUpdate, f64)> {
    match read_message(&mut s.reader, max_frame)? {
        WireMessage::Update {
            round: got,
            samples,
            blob,
        } => {
            if got != round {
                return Err(Error::Protocol(format!("update for round {got} during round {round}")));
            }
            if samples != s.samples {
                return Err(Error::Protocol(format!(
                    "reported {samples} samples, announced {}",
                    s.samples
                )));
            }
            let (params, loss) = unpack_update(deserialize_checkpoint(&blob)?)?;
            Ok((
                ClientUpdate {
                    round,
                    client: s.client,
                    samples,
                    params,
                },
                loss,
            ))
        }
        other => Err(Error::Protocol(format!("expected UPDATE, got {}", other.kind()))),
    }
}

/// Connects, retrying for up to `patience` while the server starts.
pub fn connect_with_retry(addr: impl ToSocketAddrs + Clone, patience: Duration) -> Result<TcpStream> {
    let step = Duration::from_millis(100);
    let mut waited = Duration::ZERO;
    loop {
        match TcpStream::connect(addr.clone()) {
            Ok(s) => return Ok(s),
            Err(e) if waited >= patience => return Err(e.into()),
            Err(_) => {
                thread::sleep(step);
                waited += step;
            }
        }
    }
}

/// Runs one client until the server sends DONE. Returns the number of
/// rounds trained.
pub fn run_client(stream: TcpStream, mut trainer: ClientTrainer) -> Result<u32> {
    stream.set_nodelay(true)?;
    let mut reader = BufReader::new(stream.try_clone()?);
    let mut writer = BufWriter::new(stream);
    let samples = trainer.shard.len() as u64;
    write_message(
        &mut writer,
        &WireMessage::Hello {
            client: trainer.client,
            samples,
        },
    )?;
    let mut rounds = 0;
    loop {
        match read_message(&mut reader, DEFAULT_MAX_FRAME)? {
            WireMessage::Global { round, blob } => {
                let global = deserialize_checkpoint(&blob)?;
                let (update, loss) = trainer.train_round(&global, round)?;
                let blob = serialize_checkpoint(&pack_update(&update.params, loss)?);
                write_message(&mut writer, &WireMessage::Update { round, samples, blob })?;
                rounds += 1;
            }
            WireMessage::Done => return Ok(rounds),
            other => return Err(Error::Protocol(format!("client got unexpected {}", other.kind()))),
        }
    }
}
