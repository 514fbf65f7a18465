import * as fs from "fs";
import * as os from "os";
import * as path from "path";

import { writeWav } from "../src/wav";

/** Ten-utterance corpus with one synthesized tone clip per utterance. */
export function makeFixtureWorkspace(): { root: string; corpus: string; wavDir: string } {
  const root = fs.mkdtempSync(path.join(os.tmpdir(), "encoder-export-"));
  const wavDir = path.join(root, "wav");
  fs.mkdirSync(wavDir);
  const lines: string[] = [];
  const words = ["solve", "triangle", "check", "answer", "formula", "step"];
  for (let i = 0; i < 10; i++) {
    const id = `u${String(i).padStart(5, "0")}`;
    const audioRef = `clip_${id}`;
    const text = [
      words[i % words.length],
      words[(i + 2) % words.length],
      words[(i + 4) % words.length],
    ].join(" ");
    lines.push(
      JSON.stringify({
        id,
        triad_id: "t00",
        speaker_id: `s${i % 3}`,
        start_ms: i * 1000,
        end_ms: (i + 1) * 1000,
        text,
        codes: [{ dimension: "social-cognitive", class: "SS2" }],
        audio_ref: audioRef,
      }),
    );
    const rate = 16000;
    const samples = new Float64Array(rate);
    const freq = 120 + 20 * i;
    for (let k = 0; k < rate; k++) {
      samples[k] = 0.4 * Math.sin((2 * Math.PI * freq * k) / rate);
    }
    writeWav({ samples, sampleRate: rate }, path.join(wavDir, `${audioRef}.wav`));
  }
  const corpus = path.join(root, "corpus.jsonl");
  fs.writeFileSync(corpus, lines.join("\n") + "\n");
  return { root, corpus, wavDir };
}
