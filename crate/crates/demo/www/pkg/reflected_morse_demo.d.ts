/* tslint:disable */
/* eslint-disable */

export function builtin_names(): string;

export function builtin_scenario(name: string): string;

/**
 * Fixed-endpoint index theorem on the same path with `k`, `2k`, `4k` nodes.
 */
export function index(x0: number, y0: number, heading: number, duration: number, tilt: number, k: number): string;

/**
 * Runs a scenario document and returns its report.
 */
export function run_scenario(text: string): string;

/**
 * Path samples, reflections, conjugate points and the `det B` scan.
 */
export function trace(x0: number, y0: number, heading: number, duration: number, tilt: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly builtin_names: () => [number, number];
    readonly builtin_scenario: (a: number, b: number) => [number, number];
    readonly index: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly run_scenario: (a: number, b: number) => [number, number];
    readonly trace: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
