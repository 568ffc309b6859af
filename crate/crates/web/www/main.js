import init, { Demo } from "./pkg/occupancy_web.js";

let demo = null;
const $ = (id) => document.getElementById(id);

function colour(rate) {
  // white to dark red over [0, 0.4]
  const t = Math.min(rate / 0.4, 1);
  return `rgb(${255 - 90 * t}, ${255 - 235 * t}, ${255 - 235 * t})`;
}

function drawHeatmap() {
  const map = JSON.parse(demo.heatmap(Number($("resolution").value)));
  const c = $("heatmap");
  const g = c.getContext("2d");
  const cw = c.width / map.nx, ch = c.height / map.ny;
  for (let iy = 0; iy < map.ny; iy++) {
    for (let ix = 0; ix < map.nx; ix++) {
      g.fillStyle = colour(map.rates[iy * map.nx + ix]);
      g.fillRect(ix * cw, c.height - (iy + 1) * ch, Math.ceil(cw), Math.ceil(ch));
    }
  }
  const px = (lon) => ((lon - map.lon_min) / (map.lon_max - map.lon_min)) * c.width;
  const py = (lat) => c.height - ((lat - map.lat_min) / (map.lat_max - map.lat_min)) * c.height;
  for (const s of map.stations) {
    g.beginPath();
    g.arc(px(s.lon), py(s.lat), 3, 0, 2 * Math.PI);
    g.fillStyle = "#333";
    g.fill();
    if (s.measured !== null) {
      g.beginPath();
      g.arc(px(s.lon), py(s.lat), 6, 0, 2 * Math.PI);
      g.strokeStyle = "#06c";
      g.stroke();
    }
  }
}

function axes(g, c, xmax, ymax) {
  g.clearRect(0, 0, c.width, c.height);
  g.strokeStyle = "#999";
  g.beginPath();
  g.moveTo(40, 10);
  g.lineTo(40, c.height - 30);
  g.lineTo(c.width - 10, c.height - 30);
  g.stroke();
  g.fillStyle = "#666";
  g.fillText(xmax.toFixed(1), c.width - 30, c.height - 15);
  g.fillText(ymax.toPrecision(2), 2, 14);
  return {
    x: (v) => 40 + (v / xmax) * (c.width - 50),
    y: (v) => c.height - 30 - (v / ymax) * (c.height - 40),
  };
}

function drawVariogram() {
  const v = JSON.parse(demo.variogram(100));
  const c = $("variogram");
  const g = c.getContext("2d");
  const xmax = v.curve[v.curve.length - 1][0] || 1;
  const ymax = Math.max(...v.bins.map((b) => b.gamma), ...v.curve.map((p) => p[1]), 1e-6) * 1.1;
  const s = axes(g, c, xmax, ymax);
  g.fillStyle = "#c30";
  for (const b of v.bins) {
    g.beginPath();
    g.arc(s.x(b.h), s.y(b.gamma), 3, 0, 2 * Math.PI);
    g.fill();
  }
  g.strokeStyle = "#06c";
  g.beginPath();
  v.curve.forEach(([h, y], i) => (i ? g.lineTo(s.x(h), s.y(y)) : g.moveTo(s.x(h), s.y(y))));
  g.stroke();
  $("vparams").textContent =
    `${v.origin}: nugget ${v.nugget.toFixed(4)}, sill ${v.sill.toFixed(4)}, range ${v.range_km.toFixed(2)} km`;
}

function drawProfile() {
  const p = JSON.parse(demo.courseProfile(Number($("course").value)));
  const c = $("profile");
  const g = c.getContext("2d");
  const n = p.total.length;
  const ymax = Math.max(...p.total, ...(p.truth || []), 1) * 1.1;
  const s = axes(g, c, n, ymax);
  const w = (c.width - 50) / n;
  for (let i = 0; i < n; i++) {
    g.fillStyle = "#8ad";
    g.fillRect(s.x(i) + 1, s.y(p.total[i]), w - 2, s.y(0) - s.y(p.total[i]));
    g.fillStyle = "#bbb";
    g.fillRect(s.x(i) + 1, s.y(p.ticketing[i]), w - 2, s.y(0) - s.y(p.ticketing[i]));
    if (p.truth) {
      g.fillStyle = "#000";
      g.beginPath();
      g.arc(s.x(i) + w / 2, s.y(p.truth[i]), 2.5, 0, 2 * Math.PI);
      g.fill();
    }
  }
  const t = p.start_time;
  const hhmm = `${String(Math.floor(t / 3600)).padStart(2, "0")}:${String(Math.floor((t % 3600) / 60)).padStart(2, "0")}`;
  $("cname").textContent = `${p.course_id} (${p.line_id} ${p.direction}, ${hhmm}, ${p.source})`;
}

function generate(ev) {
  if (ev) ev.preventDefault();
  const f = new FormData($("params"));
  $("status").textContent = "running...";
  setTimeout(() => {
    try {
      if (demo) demo.free();
      const t0 = performance.now();
      demo = new Demo(Number(f.get("lines")), Number(f.get("courses")), Number(f.get("coverage")), BigInt(f.get("seed")));
      $("course").max = demo.nCourses() - 1;
      drawHeatmap();
      drawVariogram();
      drawProfile();
      $("status").textContent = `${demo.nCourses()} courses in ${Math.round(performance.now() - t0)} ms`;
    } catch (e) {
      demo = null;
      $("status").textContent = String(e);
    }
  }, 0);
}

await init();
$("params").addEventListener("submit", generate);
$("resolution").addEventListener("input", () => demo && drawHeatmap());
$("course").addEventListener("input", () => demo && drawProfile());
generate();
