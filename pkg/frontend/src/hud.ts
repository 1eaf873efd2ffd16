/**
 * DOM overlay: connection status, render fps, simulation timings with
 * the per-frame budget reference line, and the force event log.
 */

export class Hud {
  private statusEl: HTMLElement;
  private statsEl: HTMLElement;
  private barEl: HTMLElement;
  private barFill: HTMLElement;
  private logEl: HTMLElement;
  private budgetMs = 18.22;
  private frameTimes: number[] = [];

  constructor(root: HTMLElement) {
    root.innerHTML = `
      <div class="hud-status">disconnected</div>
      <div class="hud-stats"></div>
      <div class="hud-bar"><div class="hud-bar-fill"></div><div class="hud-bar-budget"></div></div>
      <div class="hud-log"></div>`;
    this.statusEl = root.querySelector(".hud-status")!;
    this.statsEl = root.querySelector(".hud-stats")!;
    this.barEl = root.querySelector(".hud-bar")!;
    this.barFill = root.querySelector(".hud-bar-fill")!;
    this.logEl = root.querySelector(".hud-log")!;
  }

  setBudget(ms: number): void {
    this.budgetMs = ms;
  }

  setStatus(text: string): void {
    this.statusEl.textContent = text;
  }

  /** Call once per rendered frame with the latest sim timings. */
  tick(simTimings: [number, number, number] | null): void {
    const now = performance.now();
    this.frameTimes.push(now);
    while (this.frameTimes.length > 2 && now - this.frameTimes[0] > 1000) {
      this.frameTimes.shift();
    }
    const fps = this.frameTimes.length > 1
      ? ((this.frameTimes.length - 1) * 1000) / (now - this.frameTimes[0])
      : 0;
    if (simTimings) {
      const total = simTimings[0] + simTimings[1] + simTimings[2];
      this.statsEl.textContent =
        `view ${fps.toFixed(0)} fps | sim ${total.toFixed(2)} ms ` +
        `(modal ${simTimings[0].toFixed(2)}, devox ${simTimings[1].toFixed(2)}, ` +
        `pose ${simTimings[2].toFixed(2)}) / budget ${this.budgetMs} ms`;
      const frac = Math.min(total / (2 * this.budgetMs), 1.0);
      this.barFill.style.width = `${(frac * 100).toFixed(1)}%`;
      this.barFill.style.background = total <= this.budgetMs ? "#5a5" : "#c66";
      this.barEl.title = `budget line at 50% = ${this.budgetMs} ms`;
    } else {
      this.statsEl.textContent = `view ${fps.toFixed(0)} fps | waiting for frames`;
    }
  }

  /** Every user force shows up here with its acknowledged sim time. */
  logForce(force: [number, number, number], ack: { simTime: number; voxel: number } | "miss"): void {
    const row = document.createElement("div");
    const mag = Math.hypot(...force).toFixed(2);
    row.textContent = ack === "miss"
      ? `force |F|=${mag} -> miss`
      : `force |F|=${mag} -> voxel ${ack.voxel} @ t=${ack.simTime.toFixed(3)}s`;
    this.logEl.prepend(row);
    while (this.logEl.childElementCount > 12) this.logEl.lastChild?.remove();
  }
}
